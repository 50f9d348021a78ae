#include "amoe/runconfig.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "amoe/errors.hpp"

namespace amoe {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
T parse_num(const std::string& key, const std::string& v);

template <>
int parse_num<int>(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const int x = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ParseError("config key '" + key + "': bad integer '" + v + "'");
    }
}

template <>
double parse_num<double>(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ParseError("config key '" + key + "': bad number '" + v + "'");
    }
}

template <>
std::uint64_t parse_num<std::uint64_t>(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long x = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<std::uint64_t>(x);
    } catch (const std::exception&) {
        throw ParseError("config key '" + key + "': bad integer '" + v + "'");
    }
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> m;
        auto num_int = [&m](const std::string& key, int RunConfig::* f) {
            m[key] = Field{[key, f](RunConfig& c, const std::string& v) { c.*f = parse_num<int>(key, v); },
                           [f](const RunConfig& c) { return std::to_string(c.*f); }};
        };
        auto num_dbl = [&m](const std::string& key, double RunConfig::* f) {
            m[key] = Field{[key, f](RunConfig& c, const std::string& v) { c.*f = parse_num<double>(key, v); },
                           [f](const RunConfig& c) { return fmt_double(c.*f); }};
        };
        auto str = [&m](const std::string& key, std::string RunConfig::* f) {
            m[key] = Field{[f](RunConfig& c, const std::string& v) { c.*f = v; },
                           [f](const RunConfig& c) { return c.*f; }};
        };
        num_int("n_domains", &RunConfig::n_domains);
        num_int("objects_per_domain", &RunConfig::objects_per_domain);
        num_int("defect_classes", &RunConfig::defect_classes);
        num_int("seq_len", &RunConfig::seq_len);
        num_dbl("normal_ratio", &RunConfig::normal_ratio);
        num_int("n_samples", &RunConfig::n_samples);
        num_int("band_size", &RunConfig::band_size);
        num_int("question_len", &RunConfig::question_len);
        num_int("d_model", &RunConfig::d_model);
        num_int("n_layers", &RunConfig::n_layers);
        num_int("n_heads", &RunConfig::n_heads);
        num_int("max_seq", &RunConfig::max_seq);
        num_int("mlp_hidden", &RunConfig::mlp_hidden);
        str("injection_points", &RunConfig::injection_points);
        str("variant", &RunConfig::variant);
        num_int("n_experts", &RunConfig::n_experts);
        num_int("rank", &RunConfig::rank);
        num_dbl("alpha", &RunConfig::alpha);
        num_int("hyper_hidden", &RunConfig::hyper_hidden);
        num_int("hyper_rank", &RunConfig::hyper_rank);
        num_int("stage", &RunConfig::stage);
        num_int("steps", &RunConfig::steps);
        num_int("batch_size", &RunConfig::batch_size);
        num_dbl("lr", &RunConfig::lr);
        num_int("eval_every", &RunConfig::eval_every);
        m["seed"] = Field{[](RunConfig& c, const std::string& v) { c.seed = parse_num<std::uint64_t>("seed", v); },
                          [](const RunConfig& c) { return std::to_string(c.seed); }};
        return m;
    }();
    return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = fields().find(key);
    if (it == fields().end()) throw ParseError("unknown config key '" + key + "'");
    it->second.set(*this, value);
}

void RunConfig::set_kv(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        try {
            cfg.set_kv(t);
        } catch (const ParseError& e) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config '" + path + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    return from_text(buf.str(), path);
}

std::string RunConfig::resolved_text() const {
    std::string out;
    for (const auto& [key, field] : fields()) out += key + " = " + field.get(*this) + "\n";
    return out;
}

TaskConfig RunConfig::task() const {
    TaskConfig t;
    t.n_domains = n_domains;
    t.objects_per_domain = objects_per_domain;
    t.defect_classes = defect_classes;
    t.seq_len = seq_len;
    t.normal_ratio = normal_ratio;
    t.n_samples = n_samples;
    t.seed = seed;
    t.band_size = band_size;
    t.question_len = question_len;
    return t;
}

ModelConfig RunConfig::model() const {
    ModelConfig m;
    m.vocab_size = VocabLayout(task()).vocab_size;
    m.d_model = d_model;
    m.n_layers = n_layers;
    m.n_heads = n_heads;
    m.max_seq = max_seq;
    m.mlp_hidden = mlp_hidden;
    m.injection_points.clear();
    std::istringstream ss(injection_points);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const std::string p = trim(part);
        if (!p.empty()) m.injection_points.push_back(injection_from_name(p));
    }
    m.adapter.dim = d_model;
    m.adapter.n_experts = n_experts;
    m.adapter.rank = rank;
    m.adapter.alpha = alpha;
    m.adapter.hidden = hyper_hidden;
    m.adapter.hyper_rank = hyper_rank;
    m.adapter.variant = variant_from_name(variant);
    return m;
}

TrainConfig RunConfig::train() const {
    if (stage != 1 && stage != 2) throw ContractError("stage must be 1 or 2");
    TrainConfig t;
    t.stage = stage == 1 ? Stage::Stage1 : Stage::Stage2;
    t.steps = steps;
    t.batch_size = effective_batch();
    t.lr = effective_lr();
    t.seed = seed;
    t.eval_every = eval_every;
    return t;
}

}  // namespace amoe
