#pragma once

// Time-indexed real matrix coefficients.
//
// A schedule is either a constant matrix, a piecewise-linear interpolant over
// strictly increasing knots, or an exact algebraic combination (sum, product,
// scaling, transpose) of other schedules. Combinations are kept symbolic so
// that e.g. A + B*B/2 over piecewise-linear B evaluates exactly; operands that
// are all constant fold to a constant.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bilinear/errors.hpp"

namespace bilinear {

class CoefficientSchedule {
  public:
    enum class Kind { Constant, Grid, Derived };

    CoefficientSchedule() : CoefficientSchedule(constant(Eigen::MatrixXd())) {}

    static CoefficientSchedule constant(Eigen::MatrixXd value) {
        return CoefficientSchedule(
            std::make_shared<const Node>(ConstantNode{std::move(value)}));
    }

    static CoefficientSchedule constant(double value) {
        return constant(Eigen::MatrixXd::Constant(1, 1, value));
    }

    /// Piecewise-linear interpolation between per-knot values. Knots must be
    /// strictly increasing and all values must share one shape.
    static CoefficientSchedule grid(std::vector<double> knots,
                                    std::vector<Eigen::MatrixXd> values) {
        if (knots.empty())
            throw std::invalid_argument("grid schedule needs at least one knot");
        if (knots.size() != values.size())
            throw DimensionError("grid schedule: " +
                                 std::to_string(knots.size()) + " knots but " +
                                 std::to_string(values.size()) + " values");
        for (std::size_t k = 0; k < knots.size(); ++k) {
            if (!std::isfinite(knots[k]))
                throw std::invalid_argument("grid schedule: non-finite knot");
            if (k > 0 && !(knots[k] > knots[k - 1]))
                throw std::invalid_argument(
                    "grid schedule: knots must be strictly increasing");
            if (values[k].rows() != values[0].rows() ||
                values[k].cols() != values[0].cols())
                throw DimensionError("grid schedule: inconsistent value shapes");
        }
        return CoefficientSchedule(std::make_shared<const Node>(
            GridNode{std::move(knots), std::move(values)}));
    }

    Eigen::Index rows() const { return node_->rows; }
    Eigen::Index cols() const { return node_->cols; }
    Kind kind() const {
        switch (node_->body.index()) {
        case 0:
            return Kind::Constant;
        case 1:
            return Kind::Grid;
        default:
            return Kind::Derived;
        }
    }
    bool is_constant() const { return kind() == Kind::Constant; }

    /// Closed time interval on which evaluation succeeds.
    double lower() const { return node_->lower; }
    double upper() const { return node_->upper; }

    bool covers(double t) const {
        return t >= node_->lower - slack() && t <= node_->upper + slack();
    }

    Eigen::MatrixXd operator()(double t) const {
        if (!covers(t)) {
            std::ostringstream os;
            os << "schedule evaluated at t=" << t << " outside [" << lower()
               << ", " << upper() << "]";
            throw ScheduleRangeError(os.str(), t);
        }
        return evaluate(*node_, t);
    }

    const Eigen::MatrixXd &constant_value() const {
        const auto *c = std::get_if<ConstantNode>(&node_->body);
        if (!c)
            throw std::logic_error("schedule is not constant");
        return c->value;
    }

    std::span<const double> knots() const { return grid_node().knots; }
    std::span<const Eigen::MatrixXd> values() const {
        return grid_node().values;
    }

    CoefficientSchedule transpose() const {
        if (is_constant())
            return constant(constant_value().transpose());
        return CoefficientSchedule(std::make_shared<const Node>(
            TransposeNode{node_}, cols(), rows(), lower(), upper()));
    }

    friend CoefficientSchedule operator+(const CoefficientSchedule &lhs,
                                         const CoefficientSchedule &rhs) {
        if (lhs.rows() != rhs.rows() || lhs.cols() != rhs.cols())
            throw DimensionError("schedule sum: shape mismatch");
        if (lhs.is_constant() && rhs.is_constant())
            return constant(lhs.constant_value() + rhs.constant_value());
        return combine(SumNode{lhs.node_, rhs.node_}, lhs.rows(), lhs.cols(),
                       lhs, rhs);
    }

    friend CoefficientSchedule operator-(const CoefficientSchedule &lhs,
                                         const CoefficientSchedule &rhs) {
        return lhs + (-1.0) * rhs;
    }

    /// Matrix product; a 1x1 operand acts as a scalar factor.
    friend CoefficientSchedule operator*(const CoefficientSchedule &lhs,
                                         const CoefficientSchedule &rhs) {
        Eigen::Index r = 0;
        Eigen::Index c = 0;
        if (is_scalar(lhs)) {
            r = rhs.rows();
            c = rhs.cols();
        } else if (is_scalar(rhs)) {
            r = lhs.rows();
            c = lhs.cols();
        } else if (lhs.cols() == rhs.rows()) {
            r = lhs.rows();
            c = rhs.cols();
        } else {
            throw DimensionError("schedule product: inner dimensions differ");
        }
        if (lhs.is_constant() && rhs.is_constant())
            return constant(multiply(lhs.constant_value(), rhs.constant_value()));
        return combine(ProductNode{lhs.node_, rhs.node_}, r, c, lhs, rhs);
    }

    friend CoefficientSchedule operator*(double factor,
                                         const CoefficientSchedule &s) {
        if (s.is_constant())
            return constant(factor * s.constant_value());
        return CoefficientSchedule(std::make_shared<const Node>(
            ScaleNode{factor, s.node_}, s.rows(), s.cols(), s.lower(),
            s.upper()));
    }

  private:
    struct Node;
    using NodePtr = std::shared_ptr<const Node>;

    struct ConstantNode {
        Eigen::MatrixXd value;
    };
    struct GridNode {
        std::vector<double> knots;
        std::vector<Eigen::MatrixXd> values;
    };
    struct SumNode {
        NodePtr lhs, rhs;
    };
    struct ProductNode {
        NodePtr lhs, rhs;
    };
    struct ScaleNode {
        double factor;
        NodePtr operand;
    };
    struct TransposeNode {
        NodePtr operand;
    };

    struct Node {
        std::variant<ConstantNode, GridNode, SumNode, ProductNode, ScaleNode,
                     TransposeNode>
            body;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        double lower = -std::numeric_limits<double>::infinity();
        double upper = std::numeric_limits<double>::infinity();

        explicit Node(ConstantNode c)
            : rows(c.value.rows()), cols(c.value.cols()) {
            body = std::move(c);
        }
        explicit Node(GridNode g)
            : rows(g.values.front().rows()), cols(g.values.front().cols()),
              lower(g.knots.front()), upper(g.knots.back()) {
            body = std::move(g);
        }
        template <class Body>
        Node(Body b, Eigen::Index r, Eigen::Index c, double lo, double hi)
            : body(std::move(b)), rows(r), cols(c), lower(lo), upper(hi) {}
    };

    explicit CoefficientSchedule(NodePtr node) : node_(std::move(node)) {}

    template <class Body>
    static CoefficientSchedule combine(Body body, Eigen::Index r,
                                       Eigen::Index c,
                                       const CoefficientSchedule &lhs,
                                       const CoefficientSchedule &rhs) {
        const double lo = std::max(lhs.lower(), rhs.lower());
        const double hi = std::min(lhs.upper(), rhs.upper());
        if (lo > hi)
            throw std::invalid_argument(
                "combined schedules have disjoint time ranges");
        return CoefficientSchedule(
            std::make_shared<const Node>(std::move(body), r, c, lo, hi));
    }

    static bool is_scalar(const CoefficientSchedule &s) {
        return s.rows() == 1 && s.cols() == 1;
    }

    static Eigen::MatrixXd multiply(const Eigen::MatrixXd &lhs,
                                    const Eigen::MatrixXd &rhs) {
        if (lhs.rows() == 1 && lhs.cols() == 1)
            return lhs(0, 0) * rhs;
        if (rhs.rows() == 1 && rhs.cols() == 1)
            return lhs * rhs(0, 0);
        return lhs * rhs;
    }

    // Knot-range tolerance for t = t0 + k*dt landing a rounding error past
    // the last knot.
    double slack() const {
        if (!std::isfinite(node_->lower) || !std::isfinite(node_->upper))
            return 0.0;
        return 1e-12 * std::max({1.0, std::abs(node_->lower),
                                 std::abs(node_->upper)});
    }

    const GridNode &grid_node() const {
        const auto *g = std::get_if<GridNode>(&node_->body);
        if (!g)
            throw std::logic_error("schedule is not a grid schedule");
        return *g;
    }

    static Eigen::MatrixXd evaluate(const Node &node, double t) {
        struct Visitor {
            double t;
            Eigen::MatrixXd operator()(const ConstantNode &c) const {
                return c.value;
            }
            Eigen::MatrixXd operator()(const GridNode &g) const {
                const auto &k = g.knots;
                if (t <= k.front())
                    return g.values.front();
                if (t >= k.back())
                    return g.values.back();
                const auto hi = static_cast<std::size_t>(
                    std::upper_bound(k.begin(), k.end(), t) - k.begin());
                const auto lo = hi - 1;
                const double w = (t - k[lo]) / (k[hi] - k[lo]);
                return (1.0 - w) * g.values[lo] + w * g.values[hi];
            }
            Eigen::MatrixXd operator()(const SumNode &s) const {
                return evaluate(*s.lhs, t) + evaluate(*s.rhs, t);
            }
            Eigen::MatrixXd operator()(const ProductNode &p) const {
                return multiply(evaluate(*p.lhs, t), evaluate(*p.rhs, t));
            }
            Eigen::MatrixXd operator()(const ScaleNode &s) const {
                return s.factor * evaluate(*s.operand, t);
            }
            Eigen::MatrixXd operator()(const TransposeNode &tr) const {
                return evaluate(*tr.operand, t).transpose();
            }
        };
        return std::visit(Visitor{t}, node.body);
    }

    NodePtr node_;
};

} // namespace bilinear
