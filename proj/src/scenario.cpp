#include "funnelctl/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "funnelctl/errors.hpp"

namespace funnelctl {

namespace {

// Strict object reader: every key must be consumed before finish().
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) fail("expected an object");
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where_ + ": " + msg); }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& at(const std::string& key) {
        if (!j_.contains(key)) fail("missing field \"" + key + "\"");
        seen_.insert(key);
        return j_.at(key);
    }

    double num(const std::string& key) {
        const json& v = at(key);
        if (!v.is_number()) fail("field \"" + key + "\" must be a number");
        return v.get<double>();
    }
    double num_or(const std::string& key, double def) { return has(key) ? num(key) : def; }

    int integer(const std::string& key) {
        const json& v = at(key);
        if (!v.is_number_integer()) fail("field \"" + key + "\" must be an integer");
        return v.get<int>();
    }
    int integer_or(const std::string& key, int def) { return has(key) ? integer(key) : def; }

    bool boolean_or(const std::string& key, bool def) {
        if (!has(key)) return def;
        const json& v = at(key);
        if (!v.is_boolean()) fail("field \"" + key + "\" must be a boolean");
        return v.get<bool>();
    }

    std::string str(const std::string& key) {
        const json& v = at(key);
        if (!v.is_string()) fail("field \"" + key + "\" must be a string");
        return v.get<std::string>();
    }
    std::string str_or(const std::string& key, const std::string& def) { return has(key) ? str(key) : def; }

    Eigen::VectorXd vec(const std::string& key) {
        const json& v = at(key);
        if (!v.is_array()) fail("field \"" + key + "\" must be an array of numbers");
        Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) fail("field \"" + key + "\" must be an array of numbers");
            out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
        }
        return out;
    }

    Eigen::MatrixXd mat(const std::string& key) {
        const json& v = at(key);
        if (!v.is_array()) fail("field \"" + key + "\" must be an array of rows");
        const std::size_t rows = v.size();
        const std::size_t cols = rows ? (v[0].is_array() ? v[0].size() : 0) : 0;
        Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (std::size_t i = 0; i < rows; ++i) {
            if (!v[i].is_array() || v[i].size() != cols) fail("field \"" + key + "\" has ragged rows");
            for (std::size_t k = 0; k < cols; ++k) {
                if (!v[i][k].is_number()) fail("field \"" + key + "\" must hold numbers");
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v[i][k].get<double>();
            }
        }
        return out;
    }

    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (!seen_.count(key)) fail("unknown field \"" + key + "\"");
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

json vec_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json mat_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        a.push_back(row);
    }
    return a;
}

GainFunctions parse_gains(Reader& rd) {
    GainFunctions g;
    const std::string n = rd.str_or("N", "neg_identity");
    if (n == "neg_identity") g.shape = GainShape::NegIdentity;
    else if (n == "nussbaum") g.shape = GainShape::Nussbaum;
    else rd.fail("N must be \"neg_identity\" or \"nussbaum\"");
    const std::string gm = rd.str_or("gamma", "reciprocal");
    if (gm != "reciprocal") rd.fail("gamma must be \"reciprocal\"");
    return g;
}

std::string shape_name(GainShape s) { return s == GainShape::Nussbaum ? "nussbaum" : "neg_identity"; }

FunnelFunction parse_funnel(const json& j) {
    Reader rd(j, "funnel");
    const std::string fam = rd.str("family");
    try {
        if (fam == "exponential") {
            const double a = rd.num("a"), lambda = rd.num("lambda"), c = rd.num("c");
            const double alpha = rd.num("alpha"), beta = rd.num("beta");
            rd.finish();
            return FunnelFunction::exponential(a, lambda, c, alpha, beta);
        }
        if (fam == "constant") {
            const double c = rd.num("c"), alpha = rd.num("alpha"), beta = rd.num("beta");
            rd.finish();
            return FunnelFunction::constant(c, alpha, beta);
        }
    } catch (const UsageError& e) {
        rd.fail(e.what());
    }
    rd.fail("family must be \"exponential\" or \"constant\"");
}

json funnel_json(const FunnelFunction& f) {
    if (const auto* e = std::get_if<Exponential>(&f.family()))
        return {{"family", "exponential"}, {"a", e->a}, {"lambda", e->lambda}, {"c", e->c},
                {"alpha", f.alpha()}, {"beta", f.beta()}};
    const auto& b = std::get<ConstantBand>(f.family());
    return {{"family", "constant"}, {"c", b.c}, {"alpha", f.alpha()}, {"beta", f.beta()}};
}

ScalarReference parse_scalar_reference(const json& j, const std::string& where) {
    Reader rd(j, where);
    const std::string type = rd.str("type");
    if (type == "cosine") {
        CosineSignal c{rd.num("amplitude"), rd.num("frequency"), rd.num_or("phase", 0.0)};
        rd.finish();
        return c;
    }
    if (type == "spline") {
        PolynomialSpline s;
        const Eigen::VectorXd knots = rd.vec("knots");
        s.knots.assign(knots.data(), knots.data() + knots.size());
        const json& coeffs = rd.at("coefficients");
        if (!coeffs.is_array()) rd.fail("coefficients must be an array of arrays");
        for (const auto& seg : coeffs) {
            if (!seg.is_array()) rd.fail("coefficients must be an array of arrays");
            std::vector<double> c;
            for (const auto& v : seg) {
                if (!v.is_number()) rd.fail("coefficients must hold numbers");
                c.push_back(v.get<double>());
            }
            s.coefficients.push_back(std::move(c));
        }
        s.smoothness = rd.integer("smoothness");
        rd.finish();
        return s;
    }
    rd.fail("reference type must be \"cosine\" or \"spline\"");
}

json scalar_reference_json(const ScalarReference& r) {
    if (const auto* c = std::get_if<CosineSignal>(&r))
        return {{"type", "cosine"}, {"amplitude", c->amplitude}, {"frequency", c->frequency}, {"phase", c->phase}};
    const auto& s = std::get<PolynomialSpline>(r);
    return {{"type", "spline"}, {"knots", s.knots}, {"coefficients", s.coefficients}, {"smoothness", s.smoothness}};
}

Disturbance parse_disturbance(const json& j) {
    Reader rd(j, "plant.disturbance");
    const std::string type = rd.str("type");
    Disturbance d;
    if (type == "zero") d = ZeroDisturbance{};
    else if (type == "constant") d = ConstantDisturbance{rd.num("level")};
    else if (type == "sinusoid") d = SinusoidDisturbance{rd.num("amplitude"), rd.num("frequency"), rd.num_or("phase", 0.0)};
    else rd.fail("disturbance type must be zero, constant or sinusoid");
    rd.finish();
    return d;
}

json disturbance_json(const Disturbance& d) {
    if (const auto* c = std::get_if<ConstantDisturbance>(&d)) return {{"type", "constant"}, {"level", c->level}};
    if (const auto* s = std::get_if<SinusoidDisturbance>(&d))
        return {{"type", "sinusoid"}, {"amplitude", s->amplitude}, {"frequency", s->frequency}, {"phase", s->phase}};
    return {{"type", "zero"}};
}

OperatorSpec parse_operator(const json& j) {
    Reader rd(j, "plant.operator");
    const std::string type = rd.str("type");
    OperatorSpec op;
    if (type == "delay") {
        op = DelaySpec{rd.num("tau")};
    } else if (type == "linear") {
        op = LinearSpec{rd.mat("A"), rd.mat("B"), rd.mat("C"), rd.mat("D"), rd.vec("eta0")};
    } else if (type == "play") {
        op = PlaySpec{rd.num("sigma"), rd.vec("w0")};
    } else if (type == "relay") {
        RelaySpec r{rd.num("on_level"), rd.num("off_level"), rd.num("out_hi"), rd.num("out_lo"), {}};
        const json& s = rd.at("state0");
        if (!s.is_array()) rd.fail("state0 must be an array of booleans");
        for (const auto& b : s) {
            if (!b.is_boolean()) rd.fail("state0 must be an array of booleans");
            r.state0.push_back(b.get<bool>());
        }
        op = r;
    } else {
        rd.fail("operator type must be delay, linear, play or relay");
    }
    rd.finish();
    return op;
}

json operator_json(const OperatorSpec& op) {
    if (const auto* d = std::get_if<DelaySpec>(&op)) return {{"type", "delay"}, {"tau", d->tau}};
    if (const auto* l = std::get_if<LinearSpec>(&op))
        return {{"type", "linear"}, {"A", mat_json(l->A)}, {"B", mat_json(l->B)}, {"C", mat_json(l->C)},
                {"D", mat_json(l->D)}, {"eta0", vec_json(l->eta0)}};
    if (const auto* p = std::get_if<PlaySpec>(&op)) return {{"type", "play"}, {"sigma", p->sigma}, {"w0", vec_json(p->w0)}};
    const auto& r = std::get<RelaySpec>(op);
    json s = json::array();
    for (bool b : r.state0) s.push_back(b);
    return {{"type", "relay"}, {"on_level", r.on_level}, {"off_level", r.off_level}, {"out_hi", r.out_hi},
            {"out_lo", r.out_lo}, {"state0", s}};
}

PlantSpec parse_plant(const json& j) {
    Reader rd(j, "plant");
    const std::string kind = rd.str("plant");
    if (kind == "mass_on_car") {
        MassOnCarParams p{rd.num("m1"), rd.num("m2"), rd.num("c"), rd.num("delta"), rd.num("theta")};
        rd.finish();
        try {
            MassOnCarPlant check(p);
        } catch (const UsageError& e) {
            rd.fail(e.what());
        }
        return p;
    }
    if (kind == "fde") {
        FdeSpec s;
        s.r = rd.integer("r");
        s.m = rd.integer("m");
        if (s.r < 1 || s.r > kMaxOrder || s.m < 1) rd.fail("fde plant needs 1 <= r <= 20 and m >= 1");
        Reader fr(rd.at("f"), "plant.f");
        s.f.d_gain = fr.vec("d_gain");
        s.f.t_gain = fr.mat("t_gain");
        s.f.u_gain = fr.mat("u_gain");
        fr.finish();
        if (s.f.d_gain.size() != s.m) rd.fail("f.d_gain must have m entries");
        if (s.f.u_gain.rows() != s.m || s.f.u_gain.cols() != s.m) rd.fail("f.u_gain must be m x m");
        if (rd.has("operator")) s.op = parse_operator(rd.at("operator"));
        if (rd.has("disturbance")) s.disturbance = parse_disturbance(rd.at("disturbance"));
        rd.finish();
        return s;
    }
    rd.fail("plant must be \"mass_on_car\" or \"fde\"");
}

json plant_json(const PlantSpec& p) {
    if (const auto* mc = std::get_if<MassOnCarParams>(&p))
        return {{"plant", "mass_on_car"}, {"m1", mc->m1}, {"m2", mc->m2}, {"c", mc->c}, {"delta", mc->delta},
                {"theta", mc->theta}};
    const auto& s = std::get<FdeSpec>(p);
    json j = {{"plant", "fde"},
              {"r", s.r},
              {"m", s.m},
              {"f", {{"d_gain", vec_json(s.f.d_gain)}, {"t_gain", mat_json(s.f.t_gain)}, {"u_gain", mat_json(s.f.u_gain)}}},
              {"disturbance", disturbance_json(s.disturbance)}};
    if (s.op) j["operator"] = operator_json(*s.op);
    return j;
}

const std::vector<std::string> kMassOnCarInit{"z", "zdot", "s", "sdot"};

Eigen::VectorXd parse_initial_state(const json& j, const PlantSpec& plant) {
    Reader rd(j, "initial_state");
    Eigen::VectorXd x;
    if (std::holds_alternative<MassOnCarParams>(plant)) {
        x.resize(4);
        x << rd.num("z"), rd.num("s"), rd.num("zdot"), rd.num("sdot");
    } else {
        const auto& s = std::get<FdeSpec>(plant);
        x = rd.vec("y");
        if (x.size() != static_cast<Eigen::Index>(s.r) * s.m) rd.fail("y must hold the r*m stacked output derivatives");
    }
    rd.finish();
    return x;
}

json initial_state_json(const Eigen::VectorXd& x, const PlantSpec& plant) {
    if (std::holds_alternative<MassOnCarParams>(plant))
        return {{"z", x(0)}, {"s", x(1)}, {"zdot", x(2)}, {"sdot", x(3)}};
    return {{"y", vec_json(x)}};
}

ControllerSpec parse_controller(const json& j, const std::string& where) {
    Reader rd(j, where);
    ControllerSpec c;
    c.kind = rd.str("controller");
    if (c.kind == "new_fc") {
        c.k = rd.num("k");
        if (!(c.k >= 0.0)) rd.fail("k must be >= 0");
    } else if (c.kind == "legacy_fc") {
        c.stage_scale = rd.num_or("stage_scale", 2.0);
        if (!(c.stage_scale > 0.0)) rd.fail("stage_scale must be positive");
    } else {
        rd.fail("controller must be \"new_fc\" or \"legacy_fc\"");
    }
    c.gains = parse_gains(rd);
    c.has_label = rd.has("name");
    c.label = c.has_label ? rd.str("name") : c.kind;
    rd.finish();
    return c;
}

json controller_json(const ControllerSpec& c) {
    json j = {{"controller", c.kind}, {"N", shape_name(c.gains.shape)}, {"gamma", "reciprocal"}};
    if (c.kind == "new_fc") j["k"] = c.k;
    else j["stage_scale"] = c.stage_scale;
    if (c.has_label) j["name"] = c.label;
    return j;
}

IntegratorConfig parse_integrator(const json& j) {
    Reader rd(j, "integrator");
    IntegratorConfig cfg;
    const std::string method = rd.str_or("method", "rk4");
    if (method == "rk4") {
        cfg.method = Rk4Fixed{rd.num_or("dt", 1e-4)};
    } else if (method == "rk45") {
        Rk45Adaptive a;
        a.rtol = rd.num_or("rtol", a.rtol);
        a.atol = rd.num_or("atol", a.atol);
        a.dt_min = rd.num_or("dt_min", a.dt_min);
        a.dt_init = rd.num_or("dt_init", a.dt_init);
        a.dt_max = rd.num_or("dt_max", a.dt_max);
        cfg.method = a;
    } else {
        rd.fail("method must be \"rk4\" or \"rk45\"");
    }
    cfg.t0 = rd.num_or("t0", 0.0);
    cfg.t_end = rd.num_or("t_end", 10.0);
    cfg.log_stride = rd.integer_or("log_stride", 10);
    cfg.hold = rd.boolean_or("hold", false);
    rd.finish();
    try {
        cfg.validate();
    } catch (const UsageError& e) {
        rd.fail(e.what());
    }
    return cfg;
}

json integrator_json(const IntegratorConfig& cfg) {
    json j;
    if (const auto* f = std::get_if<Rk4Fixed>(&cfg.method)) {
        j = {{"method", "rk4"}, {"dt", f->dt}};
    } else {
        const auto& a = std::get<Rk45Adaptive>(cfg.method);
        j = {{"method", "rk45"}, {"rtol", a.rtol}, {"atol", a.atol}, {"dt_min", a.dt_min},
             {"dt_init", a.dt_init}, {"dt_max", a.dt_max}};
    }
    j["t0"] = cfg.t0;
    j["t_end"] = cfg.t_end;
    j["log_stride"] = cfg.log_stride;
    j["hold"] = cfg.hold;
    return j;
}

Eigen::VectorXd simulation_state(const ScenarioConfig& cfg) {
    if (const auto* s = std::get_if<FdeSpec>(&cfg.plant); s && s->op) {
        if (const auto* l = std::get_if<LinearSpec>(&*s->op)) {
            Eigen::VectorXd x(cfg.initial_state.size() + l->eta0.size());
            x << cfg.initial_state, l->eta0;
            return x;
        }
    }
    return cfg.initial_state;
}

template <typename F>
void parallel_for(std::size_t n, unsigned jobs, F&& f) {
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                f(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

}  // namespace

int ScenarioConfig::relative_degree() const {
    if (const auto* mc = std::get_if<MassOnCarParams>(&plant)) return mc->theta == 0.0 ? 3 : 2;
    return std::get<FdeSpec>(plant).r;
}

int ScenarioConfig::output_dim() const {
    if (std::holds_alternative<MassOnCarParams>(plant)) return 1;
    return std::get<FdeSpec>(plant).m;
}

ScenarioConfig parse_config(const json& j) {
    Reader rd(j, "config");
    ScenarioConfig cfg;
    cfg.name = rd.str_or("name", "scenario");
    cfg.plant = parse_plant(rd.at("plant"));
    cfg.initial_state = parse_initial_state(rd.at("initial_state"), cfg.plant);
    cfg.funnel = parse_funnel(rd.at("funnel"));

    const json& ref = rd.at("reference");
    if (ref.is_object() && ref.contains("components")) {
        Reader rr(ref, "reference");
        const json& comps = rr.at("components");
        if (!comps.is_array()) rr.fail("components must be an array");
        for (std::size_t i = 0; i < comps.size(); ++i)
            cfg.reference.push_back(parse_scalar_reference(comps[i], "reference.components[" + std::to_string(i) + "]"));
        rr.finish();
        cfg.reference_broadcast = false;
    } else {
        cfg.reference.assign(static_cast<std::size_t>(cfg.output_dim()), parse_scalar_reference(ref, "reference"));
    }
    if (static_cast<int>(cfg.reference.size()) != cfg.output_dim())
        throw ConfigError("reference: needs one component per output (m = " + std::to_string(cfg.output_dim()) + ")");

    if (rd.has("controller") == rd.has("controllers"))
        throw ConfigError("config: give exactly one of \"controller\" or \"controllers\"");
    if (rd.has("controller")) {
        cfg.controllers.push_back(parse_controller(rd.at("controller"), "controller"));
    } else {
        cfg.controller_list = true;
        const json& list = rd.at("controllers");
        if (!list.is_array() || list.empty()) throw ConfigError("controllers: must be a nonempty array");
        for (std::size_t i = 0; i < list.size(); ++i)
            cfg.controllers.push_back(parse_controller(list[i], "controllers[" + std::to_string(i) + "]"));
    }

    cfg.integrator = rd.has("integrator") ? parse_integrator(rd.at("integrator")) : IntegratorConfig{};

    if (rd.has("output")) {
        Reader ro(rd.at("output"), "output");
        cfg.output = {ro.str_or("csv", ""), ro.str_or("report", ""), ro.str_or("events", ""), ro.str_or("plot", ""),
                      true};
        ro.finish();
    }
    if (cfg.output.csv.empty()) cfg.output.csv = cfg.name + ".csv";
    if (cfg.output.report.empty()) cfg.output.report = cfg.name + "_report.json";
    if (cfg.output.events.empty()) cfg.output.events = cfg.name + "_events.json";
    if (cfg.output.plot.empty()) cfg.output.plot = cfg.name + "_plot.py";
    rd.finish();

    // building everything once surfaces dimension and construction errors now
    try {
        auto plant = build_plant(cfg);
        if (plant->state_dim() != simulation_state(cfg).size()) throw ConfigError("initial_state: wrong size");
        (void)build_reference(cfg);
        for (const auto& c : cfg.controllers) (void)build_controller(cfg, c);
        if (cfg.relative_degree() > build_reference(cfg).max_order())
            throw ConfigError("reference: spline smoothness is below the relative degree");
    } catch (const UsageError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

json to_json(const ScenarioConfig& cfg) {
    json j;
    j["name"] = cfg.name;
    j["plant"] = plant_json(cfg.plant);
    j["initial_state"] = initial_state_json(cfg.initial_state, cfg.plant);
    if (cfg.reference_broadcast) {
        j["reference"] = scalar_reference_json(cfg.reference.front());
    } else {
        json comps = json::array();
        for (const auto& r : cfg.reference) comps.push_back(scalar_reference_json(r));
        j["reference"] = {{"components", comps}};
    }
    j["funnel"] = funnel_json(cfg.funnel);
    if (cfg.controller_list) {
        json list = json::array();
        for (const auto& c : cfg.controllers) list.push_back(controller_json(c));
        j["controllers"] = list;
    } else {
        j["controller"] = controller_json(cfg.controllers.front());
    }
    j["integrator"] = integrator_json(cfg.integrator);
    if (cfg.output.given)
        j["output"] = {{"csv", cfg.output.csv}, {"report", cfg.output.report}, {"events", cfg.output.events},
                       {"plot", cfg.output.plot}};
    return j;
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &j;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const std::string& p = parts[i];
        const bool last = i + 1 == parts.size();
        if (node->is_array()) {
            std::size_t idx = 0;
            try {
                idx = std::stoul(p);
            } catch (const std::exception&) {
                throw ConfigError("override: \"" + p + "\" is not an array index");
            }
            if (idx >= node->size()) throw ConfigError("override: index " + p + " out of range");
            node = &(*node)[idx];
        } else {
            if (!node->is_object()) throw ConfigError("override: \"" + path + "\" does not name an object field");
            node = &(*node)[p];
        }
        if (last) *node = value;
    }
}

ScenarioConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    for (const auto& o : overrides) apply_override(j, o);
    return parse_config(j);
}

std::unique_ptr<Plant> build_plant(const ScenarioConfig& cfg) {
    if (const auto* mc = std::get_if<MassOnCarParams>(&cfg.plant)) return std::make_unique<MassOnCarPlant>(*mc);
    const auto& s = std::get<FdeSpec>(cfg.plant);
    const Eigen::VectorXd stack0 = cfg.initial_state;
    std::optional<CausalOperator> op;
    if (s.op) {
        if (const auto* d = std::get_if<DelaySpec>(&*s.op)) {
            if (!(d->tau > 0.0)) throw UsageError("delay tau must be positive");
            // constant history on [t0 - tau, t0]
            op = Delay(d->tau, {cfg.integrator.t0 - d->tau, cfg.integrator.t0}, {stack0, stack0});
        } else if (const auto* l = std::get_if<LinearSpec>(&*s.op)) {
            op = LinearInternalDynamics(l->A, l->B, l->C, l->D, l->eta0);
        } else if (const auto* p = std::get_if<PlaySpec>(&*s.op)) {
            op = Play(p->sigma, p->w0);
        } else {
            const auto& r = std::get<RelaySpec>(*s.op);
            op = Relay(r.on_level, r.off_level, r.out_hi, r.out_lo, r.state0);
        }
    }
    const Eigen::Index q = op ? operator_output_dim(*op, stack0.size()) : 0;
    if (s.f.t_gain.rows() != (q ? s.m : s.f.t_gain.rows()) || s.f.t_gain.cols() != q)
        throw UsageError("f.t_gain must be m x q with q the operator output width (" + std::to_string(q) + ")");
    if (q > 0 && s.f.t_gain.rows() != s.m) throw UsageError("f.t_gain must have m rows");
    const AffineFde f = s.f;
    FdeFunction fn = [f, m = s.m](const Eigen::VectorXd& d, const Eigen::VectorXd& t_out, const Eigen::VectorXd& u) {
        Eigen::VectorXd out = f.d_gain * d(0) + f.u_gain * u;
        if (t_out.size() > 0) out += f.t_gain * t_out;
        return out;
    };
    return std::make_unique<FdePlant>(s.r, s.m, std::move(fn), std::move(op), s.disturbance, stack0);
}

ReferenceSignal build_reference(const ScenarioConfig& cfg) { return ReferenceSignal(cfg.reference); }

Controller build_controller(const ScenarioConfig& cfg, const ControllerSpec& spec) {
    const int r = cfg.relative_degree(), m = cfg.output_dim();
    if (spec.kind == "new_fc") return NewFunnelController(ErrorChainParams(spec.k, r, m), cfg.funnel, spec.gains);
    return LegacyFunnelController::with_stage_scale(cfg.funnel, spec.stage_scale, r, m, spec.gains);
}

ErrorChainParams audit_chain(const ScenarioConfig& cfg) {
    for (const auto& c : cfg.controllers)
        if (c.kind == "new_fc") return ErrorChainParams(c.k, cfg.relative_degree(), cfg.output_dim());
    return ErrorChainParams(cfg.funnel.alpha() + 2.0, cfg.relative_degree(), cfg.output_dim());
}

Stack initial_error_stack(const ScenarioConfig& cfg) {
    const auto plant = build_plant(cfg);
    const double t0 = cfg.integrator.t0;
    const RefStack ref = ref_stack(build_reference(cfg), t0, cfg.relative_degree());
    return plant->output_stack(t0, simulation_state(cfg)) - ref.stack;
}

FeasibilityReport initial_feasibility(const ScenarioConfig& cfg) {
    return check_domain_D(cfg.integrator.t0, initial_error_stack(cfg), cfg.funnel, audit_chain(cfg));
}

TheoremCompliance theorem_compliance(const ScenarioConfig& cfg, const ControllerSpec& spec) {
    const bool k_ok = spec.kind == "new_fc" && spec.k >= cfg.funnel.alpha() + 2.0;
    return {k_ok, spec.gains.surjective(), initial_feasibility(cfg).feasible};
}

int exit_code_for(const TrajectoryLog& log) {
    switch (log.status) {
        case RunStatus::Completed: return 0;
        case RunStatus::FunnelViolation: return 2;
        default: return 3;
    }
}

RunResult run_scenario(const ScenarioConfig& cfg, std::size_t controller_index) {
    if (controller_index >= cfg.controllers.size()) throw UsageError("controller index out of range");
    const ControllerSpec& spec = cfg.controllers[controller_index];
    RunResult res;
    res.label = spec.label;
    const ErrorChainParams chain = audit_chain(cfg);
    res.feasibility = check_domain_D(cfg.integrator.t0, initial_error_stack(cfg), cfg.funnel, chain);
    res.compliance = theorem_compliance(cfg, spec);

    if (spec.kind == "new_fc" && !res.compliance.k_ok) {
        std::ostringstream os;
        os << "k = " << spec.k << " is below alpha + 2 = " << cfg.funnel.alpha() + 2.0;
        res.warnings.push_back(os.str());
    }
    if (!res.compliance.N_surjective)
        res.warnings.push_back("N = neg_identity is not surjective (assumes a known positive control direction)");
    if (!res.feasibility.feasible) {
        std::string st;
        for (int s : res.feasibility.violated_stages()) st += (st.empty() ? "" : ",") + std::to_string(s);
        res.warnings.push_back("initial error stack lies outside D_t0 (stages " + st + ")");
    }

    auto plant = build_plant(cfg);
    const Controller ctrl = build_controller(cfg, spec);
    const auto start = std::chrono::steady_clock::now();
    res.log = integrate_closed_loop(*plant, ctrl, build_reference(cfg), cfg.funnel, cfg.integrator, simulation_state(cfg));
    res.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    res.events = monitor_trajectory(res.log, cfg.funnel, chain);
    res.exit_code = exit_code_for(res.log);
    return res;
}

json to_json(const FeasibilityReport& r) {
    return {{"t", r.t}, {"stage_norms", r.stage_norms}, {"stage_bounds", r.stage_bounds},
            {"margins", r.margins}, {"feasible", r.feasible}};
}

json to_json(const EventReport& r) {
    auto flags = [](const std::vector<SampleFlag>& v) {
        json a = json::array();
        for (const auto& f : v) a.push_back({{"index", f.index}, {"t", f.t}, {"detail", f.detail}});
        return a;
    };
    json aborts = json::array();
    for (const auto& e : r.aborts) aborts.push_back({{"t", e.t}, {"kind", e.kind}, {"detail", e.detail}});
    return {{"funnel_violations", flags(r.funnel_violations)},
            {"domain_D_exits", flags(r.domain_D_exits)},
            {"gain_singularity", flags(r.gain_singularity)},
            {"stage_invariance_violations", flags(r.stage_invariance_violations)},
            {"aborts", aborts},
            {"max_gain", r.max_gain},
            {"sup_u", r.sup_u},
            {"max_w", r.max_w},
            {"min_funnel_margin", r.min_funnel_margin},
            {"rms_error", r.rms_error}};
}

json to_json(const MembershipReport& r) {
    return {{"ok", r.ok}, {"worst_residual", r.worst_residual}, {"worst_t", r.worst_t}, {"min_psi", r.min_psi}};
}

json events_json(const TrajectoryLog& log) {
    json a = json::array();
    for (const auto& e : log.events) a.push_back({{"t", e.t}, {"kind", e.kind}, {"detail", e.detail}});
    return a;
}

json report_json(const ScenarioConfig& cfg, const RunResult& run, const json& artifacts) {
    const double t_last = run.log.samples.empty() ? cfg.integrator.t0 : run.log.samples.back().t;
    return {{"scenario", cfg.name},
            {"controller", run.label},
            {"exit_code", run.exit_code},
            {"status", to_string(run.log.status)},
            {"feasibility", to_json(run.feasibility)},
            {"theorem_compliance",
             {{"k_ok", run.compliance.k_ok},
              {"N_surjective", run.compliance.N_surjective},
              {"init_feasible", run.compliance.init_feasible}}},
            {"warnings", run.warnings},
            {"events", to_json(run.events)},
            {"summary",
             {{"samples", run.log.samples.size()},
              {"accepted_steps", run.log.accepted_steps},
              {"t_final", t_last},
              {"runtime_s", run.runtime_s},
              {"sup_u", run.events.sup_u},
              {"max_gain", run.events.max_gain},
              {"max_w", run.events.max_w},
              {"min_funnel_margin", run.events.min_funnel_margin},
              {"rms_error", run.events.rms_error}}},
            {"artifacts", artifacts},
            {"config", to_json(cfg)}};
}

std::string plot_script(const std::string& csv_name) {
    std::ostringstream os;
    os << R"(#!/usr/bin/env python3
# Plots tracking error against the funnel and the control input(s).
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else ")" << csv_name << R"("
with open(path) as fh:
    rows = list(csv.DictReader(fh))
cols = {k: [float(r[k]) if r[k] != "" else float("nan") for r in rows] for k in rows[0]}
t = cols["t"]

fig, (ax_e, ax_u) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
ax_e.plot(t, cols["psi"], "k--", label="psi")
ax_e.plot(t, [-p for p in cols["psi"]], "k--")
for name in cols:
    if name == "e" or name.startswith("e_"):
        ax_e.plot(t, cols[name], label=name)
ax_e.set_ylabel("tracking error")
ax_e.legend()
for name in cols:
    if name == "u" or name.startswith("u_"):
        ax_u.plot(t, cols[name], label=name)
ax_u.set_ylabel("control input")
ax_u.set_xlabel("t")
ax_u.legend()
fig.tight_layout()
out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out)
print(out)
)";
    return os.str();
}

std::vector<SweepRow> run_sweep(const json& base, const std::string& parameter, const std::vector<double>& values,
                                unsigned jobs) {
    if (values.empty()) throw UsageError("sweep needs at least one value");
    std::vector<ScenarioConfig> configs;
    for (double v : values) {
        json j = base;
        if (parameter == "k") {
            bool any = false;
            auto set_k = [&](json& c) {
                if (c.is_object() && c.value("controller", "") == "new_fc") {
                    c["k"] = v;
                    any = true;
                }
            };
            if (j.contains("controller")) set_k(j["controller"]);
            if (j.contains("controllers") && j["controllers"].is_array())
                for (auto& c : j["controllers"]) set_k(c);
            if (!any) throw UsageError("sweep k: the scenario has no new_fc controller");
        } else if (parameter == "dt") {
            j["integrator"]["dt"] = v;
        } else if (parameter == "funnel.c") {
            j["funnel"]["c"] = v;
        } else if (parameter.rfind("init.", 0) == 0 || parameter.rfind("initial_state.", 0) == 0) {
            const std::string key = parameter.substr(parameter.find('.') + 1);
            if (!j.contains("initial_state") || !j["initial_state"].contains(key))
                throw UsageError("sweep: initial state has no component \"" + key + "\"");
            j["initial_state"][key] = v;
        } else {
            throw UsageError("unknown sweep parameter \"" + parameter + "\" (k, dt, funnel.c, init.<name>)");
        }
        configs.push_back(parse_config(j));
    }

    std::vector<SweepRow> rows(values.size());
    parallel_for(values.size(), jobs, [&](std::size_t i) {
        rows[i] = {values[i], run_scenario(configs[i]), std::numeric_limits<double>::quiet_NaN()};
    });

    if (parameter == "dt") {
        const auto finest = std::min_element(values.begin(), values.end()) - values.begin();
        const auto& ref = rows[static_cast<std::size_t>(finest)].run.log;
        for (auto& row : rows) row.sup_diff = sup_error_difference(row.run.log, ref);
    }
    return rows;
}

std::string sweep_csv(const std::string& parameter, const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    const std::size_t r = rows.empty() ? 0 : rows.front().run.feasibility.margins.size();
    os << "parameter,value,exit_code,status,feasible";
    for (std::size_t i = 1; i <= r; ++i) os << ",margin_" << i;
    os << ",k_ok,min_funnel_margin,sup_u,max_gain,max_w,rms_error,funnel_violations,domain_D_exits,sup_diff\n";
    for (const auto& row : rows) {
        const auto& run = row.run;
        os << parameter << ',' << fmt(row.value) << ',' << run.exit_code << ',' << to_string(run.log.status) << ','
           << (run.feasibility.feasible ? "true" : "false");
        for (double mg : run.feasibility.margins) os << ',' << fmt(mg);
        os << ',' << (run.compliance.k_ok ? "true" : "false") << ',' << fmt(run.events.min_funnel_margin) << ','
           << fmt(run.events.sup_u) << ',' << fmt(run.events.max_gain) << ',' << fmt(run.events.max_w) << ','
           << fmt(run.events.rms_error) << ',' << run.events.funnel_violations.size() << ','
           << run.events.domain_D_exits.size() << ',' << fmt(row.sup_diff) << '\n';
    }
    return os.str();
}

std::vector<RunResult> run_compare(const ScenarioConfig& cfg, unsigned jobs) {
    if (cfg.controllers.size() < 2) throw UsageError("compare needs at least two controllers");
    std::vector<RunResult> runs(cfg.controllers.size());
    parallel_for(runs.size(), jobs, [&](std::size_t i) { runs[i] = run_scenario(cfg, i); });
    return runs;
}

std::string compare_csv(const std::vector<RunResult>& runs) {
    std::ostringstream os;
    os << "t,psi";
    for (const auto& r : runs) os << ",e_" << r.label << ",u_" << r.label << ",w_" << r.label;
    os << '\n';
    // all runs share the integrator, so samples line up by index until a run stops early
    std::size_t longest = 0, lead = 0;
    for (std::size_t i = 0; i < runs.size(); ++i)
        if (runs[i].log.samples.size() > longest) longest = runs[i].log.samples.size(), lead = i;
    for (std::size_t s = 0; s < longest; ++s) {
        const Sample& base = runs[lead].log.samples[s];
        os << fmt(base.t) << ',' << fmt(base.psi);
        for (const auto& r : runs) {
            if (s < r.log.samples.size()) {
                const Sample& x = r.log.samples[s];
                os << ',' << fmt(x.e(0)) << ',' << fmt(x.u(0)) << ',' << fmt(x.w);
            } else {
                os << ",,,";
            }
        }
        os << '\n';
    }
    return os.str();
}

std::string compare_table(const std::vector<RunResult>& runs) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "controller" << std::right << std::setw(6) << "exit" << std::setw(18)
       << "min_margin" << std::setw(14) << "max_|u|" << std::setw(14) << "max_gain" << std::setw(14) << "rms_e"
       << '\n';
    for (const auto& r : runs) {
        os << std::left << std::setw(14) << r.label << std::right << std::setw(6) << r.exit_code << std::setw(18)
           << std::setprecision(6) << r.events.min_funnel_margin << std::setw(14) << r.events.sup_u << std::setw(14)
           << r.events.max_gain << std::setw(14) << r.events.rms_error << '\n';
    }
    return os.str();
}

}  // namespace funnelctl
