#pragma once

// CSV serialization. Comma separated, one header row, LF line endings, and
// every double printed in its shortest round-trip form so that output bytes
// are a deterministic function of the values.

#include <charconv>
#include <ostream>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "bilinear/moments.hpp"
#include "bilinear/simulation.hpp"

namespace bilinear::csv {

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    if (res.ec != std::errc())
        throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, res.ptr);
}

inline void write_row(std::ostream &os, const std::vector<double> &values) {
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (k)
            os << ',';
        os << format_double(values[k]);
    }
    os << '\n';
}

inline void write_header(std::ostream &os, const std::vector<std::string> &names) {
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (k)
            os << ',';
        os << names[k];
    }
    os << '\n';
}

/// prefix_1 .. prefix_n
inline void append_vector_names(std::vector<std::string> &names,
                                const std::string &prefix, Eigen::Index n) {
    for (Eigen::Index i = 1; i <= n; ++i)
        names.push_back(prefix + "_" + std::to_string(i));
}

/// prefix_11, prefix_12, ..., prefix_nn (row-major, full matrix)
inline void append_matrix_names(std::vector<std::string> &names,
                                const std::string &prefix, Eigen::Index n) {
    for (Eigen::Index i = 1; i <= n; ++i)
        for (Eigen::Index j = 1; j <= n; ++j)
            names.push_back(prefix + "_" + std::to_string(i) + std::to_string(j));
}

inline void append(std::vector<double> &row, const Eigen::VectorXd &v) {
    row.insert(row.end(), v.data(), v.data() + v.size());
}

inline void append_row_major(std::vector<double> &row, const Eigen::MatrixXd &m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row.push_back(m(i, j));
}

/// Columns: t, mean_1..mean_n, P_11..P_nn.
inline void write_moments(std::ostream &os, const MomentTrajectory &traj) {
    const auto n = traj.front().mean.size();
    std::vector<std::string> names{"t"};
    append_vector_names(names, "mean", n);
    append_matrix_names(names, "P", n);
    write_header(os, names);
    std::vector<double> row;
    for (const auto &s : traj.states) {
        row.clear();
        row.push_back(s.t);
        append(row, s.mean);
        append_row_major(row, s.cov);
        write_row(os, row);
    }
}

/// Columns: t, mean_1..n, P_11..nn, mean_se_1..n, P_se_11..nn.
inline void write_ensemble(std::ostream &os, const Ensemble &ens) {
    const auto n = ens.mean.front().size();
    std::vector<std::string> names{"t"};
    append_vector_names(names, "mean", n);
    append_matrix_names(names, "P", n);
    append_vector_names(names, "mean_se", n);
    append_matrix_names(names, "P_se", n);
    write_header(os, names);
    std::vector<double> row;
    for (std::size_t k = 0; k < ens.grid.points(); ++k) {
        row.clear();
        row.push_back(ens.grid.time(k));
        append(row, ens.mean[k]);
        append_row_major(row, ens.cov[k]);
        append(row, ens.mean_stderr[k]);
        append_row_major(row, ens.cov_stderr[k]);
        write_row(os, row);
    }
}

/// Columns: t, x_1..x_n.
inline void write_path(std::ostream &os, const Path &path) {
    std::vector<std::string> names{"t"};
    append_vector_names(names, "x", path.states.cols());
    write_header(os, names);
    std::vector<double> row;
    for (Eigen::Index k = 0; k < path.states.rows(); ++k) {
        row.clear();
        row.push_back(path.grid.time(std::size_t(k)));
        append(row, path.states.row(k).transpose());
        write_row(os, row);
    }
}

} // namespace bilinear::csv
