#include "spikeglm/io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace spikeglm {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <typename T>
bool parse_number(std::string_view text, T& value)
{
    text = trim(text);
    if (!text.empty() && text.front() == '+')
        text.remove_prefix(1);
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    return ec == std::errc() && ptr == end && !text.empty();
}

// Reads "<key>=<value>" from the next line.
template <typename T>
T read_header(std::istream& in, const std::string& key, std::size_t& line_no)
{
    std::string line;
    if (!std::getline(in, line)) {
        if (line_no == 0)
            throw ParseError("empty file", 0);
        throw ParseError("missing '" + key + "=' header", line_no + 1);
    }
    ++line_no;
    const std::string_view text = trim(line);
    const std::string prefix = key + "=";
    if (text.substr(0, prefix.size()) != prefix)
        throw ParseError("missing '" + key + "=' header", line_no);
    T value{};
    if (!parse_number(text.substr(prefix.size()), value))
        throw ParseError("malformed '" + key + "=' header", line_no);
    return value;
}

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

std::ifstream open_in(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path.string() + "' for reading");
    return in;
}

}  // namespace

std::string format_double(double value)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

SpikeTrain read_spike_train(std::istream& in)
{
    std::size_t line_no = 0;
    const double delta = read_header<double>(in, "delta", line_no);
    std::vector<int> counts;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view text = trim(line);
        if (text.empty())
            continue;
        long long value = 0;
        if (!parse_number(text, value))
            throw ParseError("expected an integer spike count, got '" + std::string(text) + "'", line_no);
        if (value < 0)
            throw ParseError("negative spike count " + std::to_string(value), line_no);
        if (value > std::numeric_limits<int>::max())
            throw ParseError("spike count too large", line_no);
        counts.push_back(static_cast<int>(value));
    }
    if (counts.empty())
        throw ParseError("spike train has no bins", 0);
    if (!(delta > 0.0))
        throw ParseError("bin width must be positive", 1);
    return SpikeTrain(Eigen::Map<const CountVector>(counts.data(), static_cast<Index>(counts.size())),
                      delta);
}

void write_spike_train(const SpikeTrain& train, std::ostream& out)
{
    out << "delta=" << format_double(train.delta()) << '\n';
    for (Index t = 0; t < train.num_bins(); ++t)
        out << train.counts()(t) << '\n';
}

SpikeTrain load_spike_train(const std::filesystem::path& path)
{
    std::ifstream in = open_in(path);
    try {
        return read_spike_train(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
}

void save_spike_train(const SpikeTrain& train, const std::filesystem::path& path)
{
    std::ofstream out = open_out(path);
    write_spike_train(train, out);
    if (!out)
        throw IoError("failed writing '" + path.string() + "'");
}

Stimulus read_stimulus(std::istream& in)
{
    std::size_t line_no = 0;
    const double delta = read_header<double>(in, "delta", line_no);
    const long long locations = read_header<long long>(in, "locations", line_no);
    if (locations < 1)
        throw ParseError("locations must be at least 1", line_no);

    std::vector<double> values;
    std::string line;
    Index bins = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        std::istringstream fields(line);
        std::string field;
        long long n = 0;
        while (fields >> field) {
            double v = 0.0;
            if (!parse_number(field, v))
                throw ParseError("malformed stimulus value '" + field + "'", line_no);
            values.push_back(v);
            ++n;
        }
        if (n != locations)
            throw ParseError("expected " + std::to_string(locations) + " values, got "
                                 + std::to_string(n),
                             line_no);
        ++bins;
    }
    if (bins == 0)
        throw ParseError("stimulus has no bins", 0);
    if (!(delta > 0.0))
        throw ParseError("bin width must be positive", 1);
    // values are bin-major: column t of the (locations x bins) matrix.
    Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(values.data(), locations, bins);
    return Stimulus(std::move(m), delta);
}

void write_stimulus(const Stimulus& stimulus, std::ostream& out)
{
    out << "delta=" << format_double(stimulus.delta()) << '\n';
    out << "locations=" << stimulus.num_locations() << '\n';
    for (Index t = 0; t < stimulus.num_bins(); ++t) {
        for (Index i = 0; i < stimulus.num_locations(); ++i) {
            if (i > 0)
                out << ' ';
            out << format_double(stimulus.values()(i, t));
        }
        out << '\n';
    }
}

Stimulus load_stimulus(const std::filesystem::path& path)
{
    std::ifstream in = open_in(path);
    try {
        return read_stimulus(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
}

void save_stimulus(const Stimulus& stimulus, const std::filesystem::path& path)
{
    std::ofstream out = open_out(path);
    write_stimulus(stimulus, out);
    if (!out)
        throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Configuration

std::string to_string(ModelKind kind)
{
    switch (kind) {
    case ModelKind::single: return "single";
    case ModelKind::separable: return "separable";
    case ModelKind::network: return "network";
    }
    return "unknown";
}

ModelKind model_kind_from_string(const std::string& name)
{
    if (name == "single")
        return ModelKind::single;
    if (name == "separable")
        return ModelKind::separable;
    if (name == "network")
        return ModelKind::network;
    throw ConfigError("unknown model '" + name + "' (single, separable, network accepted)");
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b)
{
    return a.model == b.model && a.lags.tau_k == b.lags.tau_k && a.lags.tau_h == b.lags.tau_h
           && a.delta == b.delta && a.fit.max_iters == b.fit.max_iters
           && a.fit.grad_tol == b.fit.grad_tol && a.fit.step_tol == b.fit.step_tol
           && a.fit.damping == b.fit.damping && a.starts == b.starts
           && a.simulation == b.simulation && a.truth == b.truth && a.paths == b.paths
           && a.recover == b.recover;
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object())
        throw ConfigError(where + " must be a JSON object");
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key()))
            throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& target, const std::string& where)
{
    if (!j.contains(key))
        return;
    try {
        target = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("invalid value for '" + std::string(key) + "' in " + where);
    }
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& target, const std::string& where)
{
    if (!j.contains(key))
        return;
    T value{};
    read_field(j, key, value, where);
    target = std::move(value);
}

void require(bool ok, const std::string& what)
{
    if (!ok)
        throw ConfigError(what);
}

}  // namespace

json config_to_json(const ExperimentConfig& cfg)
{
    json j;
    j["model"] = to_string(cfg.model);
    j["tau_k"] = cfg.lags.tau_k;
    j["tau_h"] = cfg.lags.tau_h;
    j["delta"] = cfg.delta;
    j["fit"] = {{"max_iters", cfg.fit.max_iters},
                {"grad_tol", cfg.fit.grad_tol},
                {"step_tol", cfg.fit.step_tol},
                {"damping", cfg.fit.damping},
                {"starts", cfg.starts}};
    j["simulation"] = {{"num_bins", cfg.simulation.num_bins},
                       {"seed", cfg.simulation.seed},
                       {"stimulus_kind", to_string(cfg.simulation.stimulus_kind)},
                       {"num_locations", cfg.simulation.num_locations},
                       {"num_neurons", cfg.simulation.num_neurons},
                       {"rate_hz", cfg.simulation.rate_hz},
                       {"coupling", cfg.simulation.coupling}};
    json truth = json::object();
    if (cfg.truth.k) truth["k"] = *cfg.truth.k;
    if (cfg.truth.h) truth["h"] = *cfg.truth.h;
    if (cfg.truth.s) truth["s"] = *cfg.truth.s;
    if (cfg.truth.t) truth["t"] = *cfg.truth.t;
    if (cfg.truth.mu) truth["mu"] = *cfg.truth.mu;
    j["truth"] = truth;
    j["paths"] = {{"stimulus", cfg.paths.stimulus},
                  {"spikes", cfg.paths.spikes},
                  {"report", cfg.paths.report},
                  {"output_dir", cfg.paths.output_dir}};
    j["recover"] = {{"min_correlation", cfg.recover.min_correlation},
                    {"max_filter_error", cfg.recover.max_filter_error}};
    return j;
}

ExperimentConfig config_from_json(const json& j)
{
    ExperimentConfig cfg;
    check_keys(j, {"model", "tau_k", "tau_h", "delta", "fit", "simulation", "truth", "paths", "recover"},
               "config");
    if (j.contains("model")) {
        std::string model;
        read_field(j, "model", model, "config");
        cfg.model = model_kind_from_string(model);
    }
    read_field(j, "tau_k", cfg.lags.tau_k, "config");
    read_field(j, "tau_h", cfg.lags.tau_h, "config");
    read_field(j, "delta", cfg.delta, "config");

    if (j.contains("fit")) {
        const json& f = j.at("fit");
        check_keys(f, {"max_iters", "grad_tol", "step_tol", "damping", "starts"}, "fit");
        read_field(f, "max_iters", cfg.fit.max_iters, "fit");
        read_field(f, "grad_tol", cfg.fit.grad_tol, "fit");
        read_field(f, "step_tol", cfg.fit.step_tol, "fit");
        read_field(f, "damping", cfg.fit.damping, "fit");
        read_field(f, "starts", cfg.starts, "fit");
    }
    if (j.contains("simulation")) {
        const json& s = j.at("simulation");
        check_keys(s, {"num_bins", "seed", "stimulus_kind", "num_locations", "num_neurons", "rate_hz",
                       "coupling"},
                   "simulation");
        read_field(s, "num_bins", cfg.simulation.num_bins, "simulation");
        read_field(s, "seed", cfg.simulation.seed, "simulation");
        if (s.contains("stimulus_kind")) {
            std::string kind;
            read_field(s, "stimulus_kind", kind, "simulation");
            try {
                cfg.simulation.stimulus_kind = stimulus_kind_from_string(kind);
            } catch (const InvalidData& e) {
                throw ConfigError(e.what());
            }
        }
        read_field(s, "num_locations", cfg.simulation.num_locations, "simulation");
        read_field(s, "num_neurons", cfg.simulation.num_neurons, "simulation");
        read_field(s, "rate_hz", cfg.simulation.rate_hz, "simulation");
        read_field(s, "coupling", cfg.simulation.coupling, "simulation");
    }
    if (j.contains("truth")) {
        const json& t = j.at("truth");
        check_keys(t, {"k", "h", "s", "t", "mu"}, "truth");
        read_optional(t, "k", cfg.truth.k, "truth");
        read_optional(t, "h", cfg.truth.h, "truth");
        read_optional(t, "s", cfg.truth.s, "truth");
        read_optional(t, "t", cfg.truth.t, "truth");
        read_optional(t, "mu", cfg.truth.mu, "truth");
    }
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        check_keys(p, {"stimulus", "spikes", "report", "output_dir"}, "paths");
        read_field(p, "stimulus", cfg.paths.stimulus, "paths");
        read_field(p, "spikes", cfg.paths.spikes, "paths");
        read_field(p, "report", cfg.paths.report, "paths");
        read_field(p, "output_dir", cfg.paths.output_dir, "paths");
    }
    if (j.contains("recover")) {
        const json& r = j.at("recover");
        check_keys(r, {"min_correlation", "max_filter_error"}, "recover");
        read_field(r, "min_correlation", cfg.recover.min_correlation, "recover");
        read_field(r, "max_filter_error", cfg.recover.max_filter_error, "recover");
    }

    require(cfg.lags.tau_k >= 1 && cfg.lags.tau_h >= 1, "tau_k and tau_h must be at least 1");
    require(cfg.delta > 0.0, "delta must be positive");
    require(cfg.fit.max_iters >= 1, "fit.max_iters must be positive");
    require(cfg.fit.grad_tol > 0.0 && cfg.fit.step_tol > 0.0 && cfg.fit.damping > 0.0,
            "fit tolerances must be positive");
    require(cfg.starts >= 1, "fit.starts must be at least 1");
    require(cfg.simulation.num_bins >= cfg.lags.burn_in(), "simulation.num_bins must cover the lag depths");
    require(cfg.simulation.num_locations >= 1, "simulation.num_locations must be at least 1");
    require(cfg.simulation.num_neurons >= 1, "simulation.num_neurons must be at least 1");
    require(cfg.simulation.rate_hz > 0.0, "simulation.rate_hz must be positive");
    return cfg;
}

ExperimentConfig parse_config(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in = open_in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    ExperimentConfig cfg = parse_config(buf.str());
    cfg.base_dir = path.parent_path();
    return cfg;
}

SimConfig sim_config(const ExperimentConfig& cfg)
{
    return {cfg.simulation.num_bins, cfg.delta, cfg.simulation.seed, cfg.simulation.stimulus_kind};
}

std::filesystem::path resolve(const ExperimentConfig& cfg, const std::string& path)
{
    const std::filesystem::path p(path);
    return p.is_absolute() || cfg.base_dir.empty() ? p : cfg.base_dir / p;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v)
{
    return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd vector_field(const json& j, const char* key)
{
    const auto v = j.at(key).get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

json trace_json(const std::vector<IterationRecord>& trace)
{
    json out = json::array();
    for (const auto& r : trace)
        out.push_back({{"loglik", r.loglik}, {"grad_norm", r.grad_norm}});
    return out;
}

template <typename Params>
json result_body(const FitResult<Params>& r)
{
    json j;
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["final_loglik"] = r.final_loglik;
    j["params"] = params_to_json(r.params);
    j["trace"] = trace_json(r.trace);
    j["warnings"] = r.warnings;
    if (!r.converged)
        j["diagnostic"] = r.warnings.empty() ? std::string("did not converge") : r.warnings.back();
    return j;
}

json header(const ExperimentConfig& cfg)
{
    return {{"tool", kToolName}, {"version", kToolVersion}, {"model", to_string(cfg.model)}};
}

}  // namespace

json params_to_json(const GlmParams<double>& p)
{
    return {{"k", to_vector(p.k)}, {"h", to_vector(p.h)}, {"mu", p.mu}};
}

json params_to_json(const SeparableParams<double>& p)
{
    return {{"s_filter", to_vector(p.s_filter)},
            {"t_filter", to_vector(p.t_filter)},
            {"h", to_vector(p.h)},
            {"mu", p.mu}};
}

json params_to_json(const NeuronParams<double>& p)
{
    json couplings = json::array();
    for (const auto& h : p.h_couplings)
        couplings.push_back(to_vector(h));
    return {{"k", to_vector(p.k)}, {"h_couplings", couplings}, {"mu", p.mu}};
}

GlmParams<double> glm_params_from_json(const json& j)
{
    return {vector_field(j, "k"), vector_field(j, "h"), j.at("mu").get<double>()};
}

SeparableParams<double> separable_params_from_json(const json& j)
{
    return {vector_field(j, "s_filter"), vector_field(j, "t_filter"), vector_field(j, "h"),
            j.at("mu").get<double>()};
}

NeuronParams<double> neuron_params_from_json(const json& j)
{
    NeuronParams<double> p{vector_field(j, "k"), {}, j.at("mu").get<double>()};
    for (const auto& h : j.at("h_couplings")) {
        const auto v = h.get<std::vector<double>>();
        p.h_couplings.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size())));
    }
    return p;
}

json fit_report(const FitResult<GlmParams<double>>& result, const ExperimentConfig& cfg)
{
    json j = header(cfg);
    j.update(result_body(result));
    j["config"] = config_to_json(cfg);
    return j;
}

json fit_report(const FitResult<SeparableParams<double>>& result, const ExperimentConfig& cfg)
{
    json j = header(cfg);
    j.update(result_body(result));
    j["filter"] = json::array();
    const Eigen::MatrixXd k = result.params.filter();
    for (Index i = 0; i < k.rows(); ++i)
        j["filter"].push_back(to_vector(k.row(i).transpose()));
    j["config"] = config_to_json(cfg);
    return j;
}

json fit_report(const std::vector<NeuronFit>& fits, const ExperimentConfig& cfg)
{
    json j = header(cfg);
    bool all_converged = true;
    double total = 0.0;
    json neurons = json::array();
    for (const NeuronFit& f : fits) {
        json n;
        if (f.fit) {
            n = result_body(*f.fit);
            total += f.fit->final_loglik;
            all_converged = all_converged && f.fit->converged;
        } else {
            n["converged"] = false;
            n["error"] = f.error;
            n["diagnostic"] = f.error;
            all_converged = false;
        }
        n["neuron"] = f.neuron;
        neurons.push_back(std::move(n));
    }
    j["converged"] = all_converged;
    j["final_loglik"] = total;
    j["neurons"] = std::move(neurons);
    j["config"] = config_to_json(cfg);
    return j;
}

void save_json(const json& doc, const std::filesystem::path& path)
{
    std::ofstream out = open_out(path);
    out << doc.dump(2) << '\n';
    if (!out)
        throw IoError("failed writing '" + path.string() + "'");
}

json load_json(const std::filesystem::path& path)
{
    std::ifstream in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
}

}  // namespace spikeglm
