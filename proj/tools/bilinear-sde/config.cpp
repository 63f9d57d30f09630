#include "bilinear-sde/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "bilinear/csv.hpp"

namespace bilinear::cli {

namespace {

int line_of(const YAML::Node &node) {
    const auto mark = node.Mark();
    return mark.is_null() ? 0 : mark.line + 1;
}

[[noreturn]] void fail(const YAML::Node &node, const std::string &what) {
    throw ConfigError(what, line_of(node));
}

void check_keys(const YAML::Node &map, const std::string &section,
                const std::set<std::string> &allowed) {
    if (!map.IsMap())
        fail(map, "'" + section + "' must be a mapping");
    for (const auto &kv : map) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.count(key))
            fail(kv.first, "unknown key '" + key + "' in '" + section + "'");
    }
}

template <class T> T scalar(const YAML::Node &node, const std::string &what) {
    if (!node.IsScalar())
        fail(node, what + " must be a scalar");
    try {
        return node.as<T>();
    } catch (const YAML::Exception &) {
        fail(node, "cannot read " + what + " from '" + node.Scalar() + "'");
    }
}

double number(const YAML::Node &node, const std::string &what) {
    return scalar<double>(node, what);
}

std::size_t count(const YAML::Node &node, const std::string &what) {
    const auto v = scalar<long long>(node, what);
    if (v < 0)
        fail(node, what + " must be non-negative");
    return std::size_t(v);
}

std::vector<double> number_list(const YAML::Node &node, const std::string &what) {
    if (!node.IsSequence())
        fail(node, what + " must be a list");
    std::vector<double> out;
    for (const auto &item : node)
        out.push_back(number(item, what + " entry"));
    return out;
}

Eigen::VectorXd vector_literal(const YAML::Node &node, Eigen::Index n,
                               const std::string &what) {
    if (node.IsScalar() && n == 1)
        return Eigen::VectorXd::Constant(1, number(node, what));
    const auto v = number_list(node, what);
    if (Eigen::Index(v.size()) != n)
        fail(node, what + " must have " + std::to_string(n) + " entries, got " +
                       std::to_string(v.size()));
    return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

Eigen::MatrixXd matrix_literal(const YAML::Node &node, Eigen::Index rows,
                               Eigen::Index cols, const std::string &what) {
    const std::string shape = std::to_string(rows) + "x" + std::to_string(cols);
    if (node.IsScalar()) {
        if (rows != 1 || cols != 1)
            fail(node, what + " must be a " + shape + " matrix, got a scalar");
        return Eigen::MatrixXd::Constant(1, 1, number(node, what));
    }
    if (!node.IsSequence())
        fail(node, what + " must be a number or a list");
    const bool nested = node.size() > 0 && node[0].IsSequence();
    if (!nested) {
        const auto v = number_list(node, what);
        const auto len = Eigen::Index(v.size());
        if (cols == 1 && len == rows)
            return Eigen::Map<const Eigen::VectorXd>(v.data(), rows);
        if (rows == 1 && len == cols)
            return Eigen::Map<const Eigen::RowVectorXd>(v.data(), cols);
        fail(node, what + " must be a " + shape + " matrix, got a list of " +
                       std::to_string(len));
    }
    if (Eigen::Index(node.size()) != rows)
        fail(node, what + " must have " + std::to_string(rows) + " rows, got " +
                       std::to_string(node.size()));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto row = number_list(node[std::size_t(i)], what + " row");
        if (Eigen::Index(row.size()) != cols)
            fail(node[std::size_t(i)], what + " row " + std::to_string(i + 1) +
                                           " must have " + std::to_string(cols) +
                                           " entries");
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = row[std::size_t(j)];
    }
    return m;
}

ScheduleSpec schedule_spec(const YAML::Node &node, Eigen::Index rows,
                           Eigen::Index cols, const std::string &what) {
    ScheduleSpec spec;
    if (!node) {
        spec.values.push_back(Eigen::MatrixXd::Zero(rows, cols));
        return spec;
    }
    if (node.IsMap()) {
        check_keys(node, what, {"times", "values"});
        if (!node["times"] || !node["values"])
            fail(node, what + " time grid needs 'times' and 'values'");
        spec.knots = number_list(node["times"], what + ".times");
        const auto &values = node["values"];
        if (!values.IsSequence() || values.size() != spec.knots.size())
            fail(values, what + ".values must list one value per time");
        for (const auto &v : values)
            spec.values.push_back(matrix_literal(v, rows, cols, what + " value"));
        try {
            (void)spec.build();
        } catch (const std::exception &e) {
            fail(node, what + ": " + e.what());
        }
        return spec;
    }
    spec.values.push_back(matrix_literal(node, rows, cols, what));
    return spec;
}

Interpretation parse_interpretation(const YAML::Node &node) {
    const auto v = scalar<std::string>(node, "interpretation");
    if (v == "stratonovich")
        return Interpretation::Stratonovich;
    if (v == "ito")
        return Interpretation::Ito;
    fail(node, "interpretation must be 'stratonovich' or 'ito', got '" + v + "'");
}

InlineModel parse_model(const YAML::Node &node) {
    check_keys(node, "model",
               {"n", "interpretation", "noise", "channels", "A0", "A", "B0", "B",
                "gains"});
    InlineModel model;
    if (!node["n"])
        fail(node, "model needs 'n'");
    model.n = Eigen::Index(count(node["n"], "n"));
    if (model.n < 1)
        fail(node["n"], "n must be at least 1");
    if (node["interpretation"])
        model.interpretation = parse_interpretation(node["interpretation"]);
    if (node["noise"]) {
        const auto v = scalar<std::string>(node["noise"], "noise");
        if (v == "vector")
            model.vector_input = true;
        else if (v != "scalar")
            fail(node["noise"], "noise must be 'scalar' or 'vector', got '" + v + "'");
    }
    const auto n = model.n;
    model.drift_offset = schedule_spec(node["A0"], n, 1, "A0");
    model.drift_matrix = schedule_spec(node["A"], n, n, "A");
    if (!model.vector_input) {
        if (node["gains"] || node["channels"])
            fail(node, "'gains'/'channels' only apply to noise: vector");
        model.noise_offset = schedule_spec(node["B0"], n, 1, "B0");
        model.noise_gain = schedule_spec(node["B"], n, n, "B");
    } else {
        if (node["B"])
            fail(node["B"], "'B' only applies to noise: scalar (use 'gains')");
        if (!node["channels"])
            fail(node, "noise: vector needs 'channels'");
        const auto m = Eigen::Index(count(node["channels"], "channels"));
        if (m < 1)
            fail(node["channels"], "channels must be at least 1");
        model.noise_offset = schedule_spec(node["B0"], n, m, "B0");
        model.noise_gain = schedule_spec(node["gains"], m, 1, "gains");
    }
    try {
        (void)model.build();
    } catch (const std::exception &e) {
        fail(node, std::string("model: ") + e.what());
    }
    return model;
}

RectifierSource parse_rectifier(const YAML::Node &node) {
    check_keys(node, "rectifier", {"preset", "params"});
    RectifierSource src;
    bool have_base = false;
    if (node["preset"]) {
        src.preset = scalar<std::string>(node["preset"], "preset");
        try {
            src.params = rectifier::preset(*src.preset);
        } catch (const std::exception &e) {
            fail(node["preset"], e.what());
        }
        have_base = true;
    }
    if (const auto p = node["params"]) {
        check_keys(p, "params",
                   {"R_i", "L_i", "C", "R_L", "M", "omega", "gamma", "V_m", "f_c"});
        auto field = [&](const char *name, double &target, bool required) {
            if (p[name])
                target = number(p[name], name);
            else if (required && !have_base)
                fail(p, std::string("rectifier params need '") + name +
                            "' (or a preset to inherit from)");
        };
        field("R_i", src.params.R_i, true);
        field("L_i", src.params.L_i, true);
        field("C", src.params.C, true);
        field("R_L", src.params.R_L, true);
        field("M", src.params.M, true);
        field("omega", src.params.omega, true);
        field("gamma", src.params.gamma, true);
        field("V_m", src.params.V_m, true);
        field("f_c", src.params.f_c, false);
    } else if (!have_base) {
        fail(node, "rectifier needs 'preset' or 'params'");
    }
    try {
        src.params.validate();
    } catch (const std::exception &e) {
        fail(node, e.what());
    }
    return src;
}

EnsembleConfig parse_ensemble(const YAML::Node &node) {
    check_keys(node, "ensemble",
               {"paths", "seed", "scheme", "batches", "threads", "retain_paths"});
    EnsembleConfig e;
    if (node["paths"])
        e.paths = count(node["paths"], "paths");
    if (e.paths < 1)
        fail(node, "ensemble.paths must be at least 1");
    if (node["seed"])
        e.seed = scalar<std::uint64_t>(node["seed"], "seed");
    if (node["scheme"]) {
        const auto name = scalar<std::string>(node["scheme"], "scheme");
        const auto s = parse_scheme(name);
        if (!s)
            fail(node["scheme"], "scheme must be 'euler-maruyama-ito' or "
                                 "'heun-stratonovich', got '" + name + "'");
        e.scheme = *s;
    }
    if (node["batches"])
        e.batches = count(node["batches"], "batches");
    if (e.batches < 1)
        fail(node, "ensemble.batches must be at least 1");
    if (node["threads"])
        e.threads = unsigned(count(node["threads"], "threads"));
    if (node["retain_paths"])
        e.retain_paths = scalar<bool>(node["retain_paths"], "retain_paths");
    return e;
}

OutputsConfig parse_outputs(const YAML::Node &node) {
    check_keys(node, "outputs", {"moments", "ensemble", "paths", "report", "ccf"});
    OutputsConfig o;
    auto read = [&](const char *key, std::optional<std::string> &target) {
        if (node[key])
            target = scalar<std::string>(node[key], key);
    };
    read("moments", o.moments);
    read("ensemble", o.ensemble);
    read("paths", o.paths);
    read("report", o.report);
    read("ccf", o.ccf);
    return o;
}

// --- emission ------------------------------------------------------------

void emit_number(YAML::Emitter &out, double v) { out << csv::format_double(v); }

void emit_literal(YAML::Emitter &out, const Eigen::MatrixXd &m) {
    if (m.rows() == 1 && m.cols() == 1) {
        emit_number(out, m(0, 0));
        return;
    }
    out << YAML::Flow << YAML::BeginSeq;
    if (m.cols() == 1) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            emit_number(out, m(i, 0));
    } else {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            out << YAML::Flow << YAML::BeginSeq;
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                emit_number(out, m(i, j));
            out << YAML::EndSeq;
        }
    }
    out << YAML::EndSeq;
}

void emit_schedule(YAML::Emitter &out, const char *key, const ScheduleSpec &s) {
    out << YAML::Key << key << YAML::Value;
    if (s.knots.empty()) {
        emit_literal(out, s.values.front());
        return;
    }
    out << YAML::BeginMap;
    out << YAML::Key << "times" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double t : s.knots)
        emit_number(out, t);
    out << YAML::EndSeq;
    out << YAML::Key << "values" << YAML::Value << YAML::BeginSeq;
    for (const auto &v : s.values)
        emit_literal(out, v);
    out << YAML::EndSeq << YAML::EndMap;
}

bool same(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

} // namespace

CoefficientSchedule ScheduleSpec::build() const {
    if (knots.empty())
        return CoefficientSchedule::constant(values.front());
    return CoefficientSchedule::grid(knots, values);
}

bool ScheduleSpec::operator==(const ScheduleSpec &other) const {
    if (knots != other.knots || values.size() != other.values.size())
        return false;
    for (std::size_t k = 0; k < values.size(); ++k)
        if (!same(values[k], other.values[k]))
            return false;
    return true;
}

BilinearSDE InlineModel::build() const {
    NoiseShape noise;
    if (vector_input)
        noise = VectorInputNoise{noise_offset.build(), noise_gain.build()};
    else
        noise = ScalarInputNoise{noise_offset.build(), noise_gain.build()};
    return BilinearSDE(drift_offset.build(), drift_matrix.build(), std::move(noise),
                       interpretation);
}

bool CcfConfig::operator==(const CcfConfig &other) const {
    return same(s, other.s) && times == other.times;
}

Eigen::Index ExperimentConfig::dimension() const {
    if (const auto *m = std::get_if<InlineModel>(&model))
        return m->n;
    return 3;
}

BilinearSDE ExperimentConfig::build_system() const {
    if (const auto *m = std::get_if<InlineModel>(&model))
        return m->build();
    return rectifier::build_rectifier_sde(std::get<RectifierSource>(model).params);
}

bool ExperimentConfig::operator==(const ExperimentConfig &other) const {
    return model == other.model && same(initial_mean, other.initial_mean) &&
           same(initial_cov, other.initial_cov) && grid == other.grid &&
           moment_step == other.moment_step && ensemble == other.ensemble &&
           outputs == other.outputs && ccf == other.ccf && checks == other.checks;
}

ExperimentConfig parse_config(std::string_view text) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::ParserException &e) {
        throw ConfigError(e.msg, e.mark.is_null() ? 0 : e.mark.line + 1);
    }
    if (!root.IsMap())
        throw ConfigError("configuration must be a mapping", line_of(root));
    check_keys(root, "config",
               {"model", "rectifier", "initial", "grid", "moments", "ensemble",
                "outputs", "ccf_check", "checks"});

    ExperimentConfig cfg;
    if (root["model"] && root["rectifier"])
        fail(root["rectifier"], "give either 'model' or 'rectifier', not both");
    if (root["model"])
        cfg.model = parse_model(root["model"]);
    else if (root["rectifier"])
        cfg.model = parse_rectifier(root["rectifier"]);
    else
        fail(root, "configuration needs a 'model' or 'rectifier' section");

    const auto n = cfg.dimension();
    cfg.initial_mean = Eigen::VectorXd::Zero(n);
    cfg.initial_cov = Eigen::MatrixXd::Zero(n, n);
    if (const auto init = root["initial"]) {
        check_keys(init, "initial", {"mean", "cov"});
        if (init["mean"])
            cfg.initial_mean = vector_literal(init["mean"], n, "initial.mean");
        if (init["cov"])
            cfg.initial_cov = matrix_literal(init["cov"], n, n, "initial.cov");
    }

    const auto grid = root["grid"];
    if (!grid)
        fail(root, "configuration needs a 'grid' section");
    check_keys(grid, "grid", {"t0", "dt", "steps"});
    if (grid["t0"])
        cfg.grid.t0 = number(grid["t0"], "grid.t0");
    if (!grid["dt"] || !grid["steps"])
        fail(grid, "grid needs 'dt' and 'steps'");
    cfg.grid.dt = number(grid["dt"], "grid.dt");
    cfg.grid.steps = count(grid["steps"], "grid.steps");
    try {
        (void)cfg.grid.build();
    } catch (const std::exception &e) {
        fail(grid, e.what());
    }

    if (const auto m = root["moments"]) {
        check_keys(m, "moments", {"step"});
        if (m["step"]) {
            cfg.moment_step = number(m["step"], "moments.step");
            if (!(*cfg.moment_step > 0.0))
                fail(m["step"], "moments.step must be positive");
        }
    }
    if (root["ensemble"])
        cfg.ensemble = parse_ensemble(root["ensemble"]);
    if (root["outputs"])
        cfg.outputs = parse_outputs(root["outputs"]);
    if (const auto c = root["ccf_check"]) {
        check_keys(c, "ccf_check", {"s", "times"});
        if (!c["s"] || !c["times"])
            fail(c, "ccf_check needs 's' and 'times'");
        CcfConfig ccf;
        ccf.s = vector_literal(c["s"], n, "ccf_check.s");
        ccf.times = number_list(c["times"], "ccf_check.times");
        cfg.ccf = std::move(ccf);
    }
    if (const auto c = root["checks"]) {
        check_keys(c, "checks", {"moment_agreement_sigma"});
        if (c["moment_agreement_sigma"])
            cfg.checks.moment_agreement_sigma =
                number(c["moment_agreement_sigma"], "moment_agreement_sigma");
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path.string() + "'", 0);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string to_yaml(const ExperimentConfig &cfg) {
    YAML::Emitter out;
    out << YAML::BeginMap;

    if (const auto *m = std::get_if<InlineModel>(&cfg.model)) {
        out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "n" << YAML::Value << m->n;
        out << YAML::Key << "interpretation" << YAML::Value
            << std::string(to_string(m->interpretation));
        out << YAML::Key << "noise" << YAML::Value
            << (m->vector_input ? "vector" : "scalar");
        if (m->vector_input)
            out << YAML::Key << "channels" << YAML::Value
                << m->noise_offset.values.front().cols();
        emit_schedule(out, "A0", m->drift_offset);
        emit_schedule(out, "A", m->drift_matrix);
        emit_schedule(out, "B0", m->noise_offset);
        emit_schedule(out, m->vector_input ? "gains" : "B", m->noise_gain);
        out << YAML::EndMap;
    } else {
        const auto &r = std::get<RectifierSource>(cfg.model);
        out << YAML::Key << "rectifier" << YAML::Value << YAML::BeginMap;
        if (r.preset)
            out << YAML::Key << "preset" << YAML::Value << *r.preset;
        out << YAML::Key << "params" << YAML::Value << YAML::BeginMap;
        const std::pair<const char *, double> fields[] = {
            {"R_i", r.params.R_i},     {"L_i", r.params.L_i}, {"C", r.params.C},
            {"R_L", r.params.R_L},     {"M", r.params.M},     {"omega", r.params.omega},
            {"gamma", r.params.gamma}, {"V_m", r.params.V_m}, {"f_c", r.params.f_c}};
        for (const auto &[name, value] : fields) {
            out << YAML::Key << name << YAML::Value;
            emit_number(out, value);
        }
        out << YAML::EndMap << YAML::EndMap;
    }

    out << YAML::Key << "initial" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "mean" << YAML::Value;
    out << YAML::Flow << YAML::BeginSeq;
    for (Eigen::Index i = 0; i < cfg.initial_mean.size(); ++i)
        emit_number(out, cfg.initial_mean(i));
    out << YAML::EndSeq;
    out << YAML::Key << "cov" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (Eigen::Index i = 0; i < cfg.initial_cov.rows(); ++i) {
        out << YAML::Flow << YAML::BeginSeq;
        for (Eigen::Index j = 0; j < cfg.initial_cov.cols(); ++j)
            emit_number(out, cfg.initial_cov(i, j));
        out << YAML::EndSeq;
    }
    out << YAML::EndSeq << YAML::EndMap;

    out << YAML::Key << "grid" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "t0" << YAML::Value;
    emit_number(out, cfg.grid.t0);
    out << YAML::Key << "dt" << YAML::Value;
    emit_number(out, cfg.grid.dt);
    out << YAML::Key << "steps" << YAML::Value << cfg.grid.steps;
    out << YAML::EndMap;

    if (cfg.moment_step) {
        out << YAML::Key << "moments" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "step" << YAML::Value;
        emit_number(out, *cfg.moment_step);
        out << YAML::EndMap;
    }
    if (cfg.ensemble) {
        const auto &e = *cfg.ensemble;
        out << YAML::Key << "ensemble" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "paths" << YAML::Value << e.paths;
        out << YAML::Key << "seed" << YAML::Value << e.seed;
        out << YAML::Key << "scheme" << YAML::Value << std::string(to_string(e.scheme));
        out << YAML::Key << "batches" << YAML::Value << e.batches;
        out << YAML::Key << "threads" << YAML::Value << e.threads;
        out << YAML::Key << "retain_paths" << YAML::Value << e.retain_paths;
        out << YAML::EndMap;
    }
    const std::pair<const char *, const std::optional<std::string> *> outputs[] = {
        {"moments", &cfg.outputs.moments}, {"ensemble", &cfg.outputs.ensemble},
        {"paths", &cfg.outputs.paths},     {"report", &cfg.outputs.report},
        {"ccf", &cfg.outputs.ccf}};
    out << YAML::Key << "outputs" << YAML::Value << YAML::BeginMap;
    for (const auto &[key, value] : outputs)
        if (*value)
            out << YAML::Key << key << YAML::Value << YAML::DoubleQuoted << **value;
    out << YAML::EndMap;

    if (cfg.ccf) {
        out << YAML::Key << "ccf_check" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "s" << YAML::Value << YAML::Flow << YAML::BeginSeq;
        for (Eigen::Index i = 0; i < cfg.ccf->s.size(); ++i)
            emit_number(out, cfg.ccf->s(i));
        out << YAML::EndSeq;
        out << YAML::Key << "times" << YAML::Value << YAML::Flow << YAML::BeginSeq;
        for (double t : cfg.ccf->times)
            emit_number(out, t);
        out << YAML::EndSeq << YAML::EndMap;
    }
    if (cfg.checks.moment_agreement_sigma) {
        out << YAML::Key << "checks" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "moment_agreement_sigma" << YAML::Value;
        emit_number(out, *cfg.checks.moment_agreement_sigma);
        out << YAML::EndMap;
    }
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

void apply_preset(ExperimentConfig &cfg, std::string_view preset) {
    RectifierSource src;
    src.preset = std::string(preset);
    src.params = rectifier::preset(preset);
    cfg.model = std::move(src);
    if (cfg.initial_mean.size() != 3) {
        cfg.initial_mean = Eigen::VectorXd::Zero(3);
        cfg.initial_cov = Eigen::MatrixXd::Zero(3, 3);
    }
    if (cfg.ccf && cfg.ccf->s.size() != 3)
        throw ConfigError("ccf_check.s does not match the rectifier dimension 3", 0);
}

} // namespace bilinear::cli
