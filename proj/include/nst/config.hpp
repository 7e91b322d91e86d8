#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nst/data.hpp"
#include "nst/losses.hpp"
#include "nst/net.hpp"
#include "nst/sgd.hpp"

namespace nst {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& field, const std::string& msg)
        : std::runtime_error("config: field '" + field + "': " + msg) {}
};

struct DatasetConfig {
    enum class Kind { Blobs, Idx };
    Kind kind = Kind::Blobs;
    // blobs
    std::size_t classes = 10, per_class_train = 100, per_class_test = 100, dim = 32;
    double spread = 0.35;
    std::uint64_t seed = 1;
    std::size_t shape_c = 0, shape_h = 0, shape_w = 0;  // 0,0,0 -> dim x 1 x 1
    // idx
    std::string train_images, train_labels, test_images, test_labels;
    bool normalize = true;
};

struct NamedMethod {
    std::string name;
    TransferLoss loss;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    std::vector<LayerSpec> teacher_layers, student_layers;
    std::size_t teacher_tap = 0, student_tap = 0;
    std::vector<NamedMethod> methods;
    SgdConfig sgd;
    std::size_t epochs = 60, batch_size = 128;
    bool use_augment = false;
    AugmentSpec augment;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "runs";
    bool timing_wall = false;  // when false, summary wall_ms is written as 0
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline double parse_double(const std::string& field, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (const std::exception&) {
        throw ConfigError(field, "expected a number, got '" + v + "'");
    }
}

inline std::uint64_t parse_uint(const std::string& field, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return u;
    } catch (const std::exception&) {
        throw ConfigError(field, "expected a non-negative integer, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& field, const std::string& v) {
    const std::string l = lower(v);
    if (l == "true" || l == "1" || l == "yes") return true;
    if (l == "false" || l == "0" || l == "no") return false;
    throw ConfigError(field, "expected true/false, got '" + v + "'");
}

}  // namespace detail

// Architecture strings: comma-separated layer tokens
//   conv:<out_channels> | dense:<out_features> | relu | pool | flatten
inline std::vector<LayerSpec> parse_arch(const std::string& field, const std::string& text) {
    std::vector<LayerSpec> layers;
    for (const std::string& tok : detail::split(text, ',')) {
        if (tok.empty()) throw ConfigError(field, "empty layer token");
        const auto colon = tok.find(':');
        const std::string head = detail::lower(colon == std::string::npos ? tok : tok.substr(0, colon));
        if (head == "conv" || head == "dense") {
            if (colon == std::string::npos)
                throw ConfigError(field, "'" + head + "' needs a size, e.g. " + head + ":16");
            const std::size_t out =
                detail::parse_uint(field, detail::trim(tok.substr(colon + 1)));
            if (out == 0) throw ConfigError(field, "layer size must be >= 1");
            layers.push_back(head == "conv" ? LayerSpec::conv(out) : LayerSpec::dense(out));
        } else if (head == "relu") {
            layers.push_back(LayerSpec::relu());
        } else if (head == "pool") {
            layers.push_back(LayerSpec::maxpool());
        } else if (head == "flatten") {
            layers.push_back(LayerSpec::flatten());
        } else {
            throw ConfigError(field, "unknown layer '" + tok + "'");
        }
    }
    if (layers.empty()) throw ConfigError(field, "architecture is empty");
    return layers;
}

// Method expressions: '+'-joined parts, each one of
//   kd | fitnet | at | nst:<linear|poly|gaussian>
// with optional bracketed overrides, e.g. nst:poly[lambda=50,d=2,c=0],
// kd[tau=4,lambda=16], at[mapping=abssum], nst:gaussian[sigma_sq=1.5].
inline TransferLoss parse_method_part(const std::string& field, const std::string& part_text) {
    std::string text = detail::trim(part_text);
    std::map<std::string, std::string> opts;
    const auto bracket = text.find('[');
    if (bracket != std::string::npos) {
        if (text.back() != ']') throw ConfigError(field, "unterminated '[' in '" + text + "'");
        for (const std::string& kv :
             detail::split(text.substr(bracket + 1, text.size() - bracket - 2), ',')) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ConfigError(field, "expected key=value in '" + kv + "'");
            opts[detail::lower(detail::trim(kv.substr(0, eq)))] = detail::trim(kv.substr(eq + 1));
        }
        text = detail::trim(text.substr(0, bracket));
    }
    const std::string l = detail::lower(text);

    auto opt_double = [&](const char* key, double dflt) {
        auto it = opts.find(key);
        return it == opts.end() ? dflt : detail::parse_double(field, it->second);
    };

    if (l == "kd") return TransferLoss::kd(opt_double("tau", kDefaultKdTau),
                                           opt_double("lambda", kDefaultKdLambda));
    if (l == "fitnet") return TransferLoss::fitnet(opt_double("lambda", kDefaultFitnetLambda));
    if (l == "at") {
        AtMapping mapping = AtMapping::SqSum;
        if (auto it = opts.find("mapping"); it != opts.end()) {
            const std::string m = detail::lower(it->second);
            if (m == "abssum")
                mapping = AtMapping::AbsSum;
            else if (m == "sqsum")
                mapping = AtMapping::SqSum;
            else
                throw ConfigError(field, "unknown AT mapping '" + it->second + "'");
        }
        return TransferLoss::at(mapping, opt_double("lambda", kDefaultAtLambda));
    }
    if (l.rfind("nst:", 0) == 0) {
        const std::string kname = l.substr(4);
        KernelSpec spec;
        if (kname == "linear") {
            spec = KernelSpec::linear();
        } else if (kname == "poly") {
            spec = KernelSpec::polynomial(
                static_cast<int>(detail::parse_uint(field, opts.count("d") ? opts["d"] : "2")),
                opt_double("c", 0.0));
        } else if (kname == "gaussian") {
            spec = opts.count("sigma_sq")
                       ? KernelSpec::gaussian_fixed(detail::parse_double(field, opts["sigma_sq"]))
                       : KernelSpec::gaussian();
        } else {
            throw ConfigError(field, "unknown kernel '" + kname + "'");
        }
        return TransferLoss::nst(spec, opt_double("lambda", default_nst_lambda(spec.family)));
    }
    throw ConfigError(field, "unknown method '" + text + "'");
}

inline NamedMethod parse_method(const std::string& field, const std::string& text) {
    std::vector<TransferLoss> parts;
    std::string name;
    for (const std::string& part : detail::split(text, '+')) {
        parts.push_back(parse_method_part(field, part));
        if (!name.empty()) name += '+';
        // canonical name: the part text without bracket overrides
        const auto bracket = part.find('[');
        name += detail::lower(detail::trim(bracket == std::string::npos
                                               ? part
                                               : part.substr(0, bracket)));
    }
    if (parts.size() == 1) return {name, parts[0]};
    return {name, TransferLoss::combined(std::move(parts))};
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno), "expected key = value");
        const std::string key = detail::lower(detail::trim(line.substr(0, eq)));
        kv[key] = detail::trim(line.substr(eq + 1));
    }

    ExperimentConfig cfg;
    auto take = [&](const char* key) -> std::string {
        auto it = kv.find(key);
        if (it == kv.end()) return "";
        std::string v = it->second;
        kv.erase(it);
        return v;
    };

    if (std::string v = take("dataset"); !v.empty()) {
        const std::string l = detail::lower(v);
        if (l == "blobs")
            cfg.dataset.kind = DatasetConfig::Kind::Blobs;
        else if (l == "idx")
            cfg.dataset.kind = DatasetConfig::Kind::Idx;
        else
            throw ConfigError("dataset", "expected blobs or idx, got '" + v + "'");
    }
    if (std::string v = take("blobs.classes"); !v.empty())
        cfg.dataset.classes = detail::parse_uint("blobs.classes", v);
    if (std::string v = take("blobs.per_class_train"); !v.empty())
        cfg.dataset.per_class_train = detail::parse_uint("blobs.per_class_train", v);
    if (std::string v = take("blobs.per_class_test"); !v.empty())
        cfg.dataset.per_class_test = detail::parse_uint("blobs.per_class_test", v);
    if (std::string v = take("blobs.dim"); !v.empty())
        cfg.dataset.dim = detail::parse_uint("blobs.dim", v);
    if (std::string v = take("blobs.spread"); !v.empty())
        cfg.dataset.spread = detail::parse_double("blobs.spread", v);
    if (std::string v = take("blobs.seed"); !v.empty())
        cfg.dataset.seed = detail::parse_uint("blobs.seed", v);
    if (std::string v = take("blobs.shape"); !v.empty()) {
        const auto dims = detail::split(detail::lower(v), 'x');
        if (dims.size() != 3) throw ConfigError("blobs.shape", "expected CxHxW, got '" + v + "'");
        cfg.dataset.shape_c = detail::parse_uint("blobs.shape", dims[0]);
        cfg.dataset.shape_h = detail::parse_uint("blobs.shape", dims[1]);
        cfg.dataset.shape_w = detail::parse_uint("blobs.shape", dims[2]);
    }
    if (std::string v = take("idx.train_images"); !v.empty()) cfg.dataset.train_images = v;
    if (std::string v = take("idx.train_labels"); !v.empty()) cfg.dataset.train_labels = v;
    if (std::string v = take("idx.test_images"); !v.empty()) cfg.dataset.test_images = v;
    if (std::string v = take("idx.test_labels"); !v.empty()) cfg.dataset.test_labels = v;
    if (std::string v = take("normalize"); !v.empty())
        cfg.dataset.normalize = detail::parse_bool("normalize", v);

    if (std::string v = take("teacher"); !v.empty())
        cfg.teacher_layers = parse_arch("teacher", v);
    else
        throw ConfigError("teacher", "missing");
    if (std::string v = take("student"); !v.empty())
        cfg.student_layers = parse_arch("student", v);
    else
        throw ConfigError("student", "missing");
    if (std::string v = take("teacher_tap"); !v.empty())
        cfg.teacher_tap = detail::parse_uint("teacher_tap", v);
    if (std::string v = take("student_tap"); !v.empty())
        cfg.student_tap = detail::parse_uint("student_tap", v);

    if (cfg.teacher_tap >= cfg.teacher_layers.size())
        throw ConfigError("teacher_tap", "layer index out of range");
    if (cfg.student_tap >= cfg.student_layers.size())
        throw ConfigError("student_tap", "layer index out of range");
    cfg.teacher_layers[cfg.teacher_tap].tap = true;
    cfg.student_layers[cfg.student_tap].tap = true;

    if (std::string v = take("methods"); !v.empty()) {
        for (const std::string& m : detail::split(v, ';')) {
            if (m.empty()) continue;
            cfg.methods.push_back(parse_method("methods", m));
        }
    }

    if (std::string v = take("epochs"); !v.empty()) cfg.epochs = detail::parse_uint("epochs", v);
    if (std::string v = take("batch_size"); !v.empty()) {
        cfg.batch_size = detail::parse_uint("batch_size", v);
        if (cfg.batch_size == 0) throw ConfigError("batch_size", "must be >= 1");
    }
    if (std::string v = take("lr"); !v.empty()) cfg.sgd.lr = detail::parse_double("lr", v);
    if (std::string v = take("momentum"); !v.empty())
        cfg.sgd.momentum = detail::parse_double("momentum", v);
    if (std::string v = take("weight_decay"); !v.empty())
        cfg.sgd.weight_decay = detail::parse_double("weight_decay", v);
    if (std::string v = take("lr_decay"); !v.empty())
        cfg.sgd.lr_decay = detail::parse_double("lr_decay", v);
    if (std::string v = take("milestones"); !v.empty()) {
        cfg.sgd.milestones.clear();
        for (const std::string& m : detail::split(v, ','))
            if (!m.empty()) cfg.sgd.milestones.push_back(detail::parse_uint("milestones", m));
    }
    cfg.sgd.validate();

    if (std::string v = take("augment"); !v.empty())
        cfg.use_augment = detail::parse_bool("augment", v);
    if (std::string v = take("pad"); !v.empty()) cfg.augment.pad = detail::parse_uint("pad", v);
    if (std::string v = take("crop"); !v.empty()) cfg.augment.crop = detail::parse_uint("crop", v);
    if (std::string v = take("hflip_prob"); !v.empty())
        cfg.augment.hflip_prob = detail::parse_double("hflip_prob", v);

    if (std::string v = take("seeds"); !v.empty()) {
        cfg.seeds.clear();
        for (const std::string& s : detail::split(v, ','))
            if (!s.empty()) cfg.seeds.push_back(detail::parse_uint("seeds", s));
    }
    if (cfg.seeds.empty()) throw ConfigError("seeds", "need at least one seed");

    if (std::string v = take("output_dir"); !v.empty()) cfg.output_dir = v;
    if (std::string v = take("timing"); !v.empty()) {
        const std::string l = detail::lower(v);
        if (l == "wall")
            cfg.timing_wall = true;
        else if (l == "none")
            cfg.timing_wall = false;
        else
            throw ConfigError("timing", "expected none or wall, got '" + v + "'");
    }

    if (!kv.empty()) throw ConfigError(kv.begin()->first, "unknown key");
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

namespace detail {

inline std::string arch_to_string(const std::vector<LayerSpec>& layers) {
    std::string s;
    for (const LayerSpec& l : layers) {
        if (!s.empty()) s += ',';
        switch (l.kind) {
            case LayerKind::Conv: s += "conv:" + std::to_string(l.out); break;
            case LayerKind::Dense: s += "dense:" + std::to_string(l.out); break;
            case LayerKind::ReLU: s += "relu"; break;
            case LayerKind::MaxPool2: s += "pool"; break;
            case LayerKind::Flatten: s += "flatten"; break;
        }
    }
    return s;
}

inline std::string loss_to_string(const TransferLoss& t) {
    std::ostringstream os;
    switch (t.kind) {
        case TransferLoss::Kind::NST:
            os << "nst(family=" << static_cast<int>(t.kernel.family) << ",d=" << t.kernel.degree
               << ",c=" << t.kernel.offset << ",bw=" << static_cast<int>(t.kernel.bandwidth)
               << ",s2=" << t.kernel.sigma_sq << ",lambda=" << t.lambda << ")";
            break;
        case TransferLoss::Kind::KD:
            os << "kd(tau=" << t.tau << ",lambda=" << t.lambda << ")";
            break;
        case TransferLoss::Kind::FitNet:
            os << "fitnet(lambda=" << t.lambda << ")";
            break;
        case TransferLoss::Kind::AT:
            os << "at(mapping=" << static_cast<int>(t.mapping) << ",lambda=" << t.lambda << ")";
            break;
        case TransferLoss::Kind::Combined:
            os << "combined(";
            for (const auto& p : t.parts) os << loss_to_string(p) << ";";
            os << ")";
            break;
    }
    return os.str();
}

}  // namespace detail

// Canonical field dump; two configs hash equal iff every parsed field agrees.
inline std::string canonical_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    const DatasetConfig& d = cfg.dataset;
    os << "dataset=" << (d.kind == DatasetConfig::Kind::Blobs ? "blobs" : "idx") << '\n'
       << "blobs.classes=" << d.classes << '\n'
       << "blobs.per_class_train=" << d.per_class_train << '\n'
       << "blobs.per_class_test=" << d.per_class_test << '\n'
       << "blobs.dim=" << d.dim << '\n'
       << "blobs.spread=" << d.spread << '\n'
       << "blobs.seed=" << d.seed << '\n'
       << "blobs.shape=" << d.shape_c << 'x' << d.shape_h << 'x' << d.shape_w << '\n'
       << "idx.train_images=" << d.train_images << '\n'
       << "idx.train_labels=" << d.train_labels << '\n'
       << "idx.test_images=" << d.test_images << '\n'
       << "idx.test_labels=" << d.test_labels << '\n'
       << "normalize=" << d.normalize << '\n'
       << "teacher=" << detail::arch_to_string(cfg.teacher_layers) << '\n'
       << "student=" << detail::arch_to_string(cfg.student_layers) << '\n'
       << "teacher_tap=" << cfg.teacher_tap << '\n'
       << "student_tap=" << cfg.student_tap << '\n';
    os << "methods=";
    for (const NamedMethod& m : cfg.methods)
        os << m.name << ':' << detail::loss_to_string(m.loss) << ';';
    os << '\n';
    os << "epochs=" << cfg.epochs << '\n'
       << "batch_size=" << cfg.batch_size << '\n'
       << "lr=" << cfg.sgd.lr << '\n'
       << "momentum=" << cfg.sgd.momentum << '\n'
       << "weight_decay=" << cfg.sgd.weight_decay << '\n'
       << "lr_decay=" << cfg.sgd.lr_decay << '\n';
    os << "milestones=";
    for (std::size_t m : cfg.sgd.milestones) os << m << ',';
    os << '\n';
    os << "augment=" << cfg.use_augment << '\n'
       << "pad=" << cfg.augment.pad << '\n'
       << "crop=" << cfg.augment.crop << '\n'
       << "hflip_prob=" << cfg.augment.hflip_prob << '\n';
    os << "seeds=";
    for (std::uint64_t s : cfg.seeds) os << s << ',';
    os << '\n';
    os << "output_dir=" << cfg.output_dir << '\n'
       << "timing=" << (cfg.timing_wall ? "wall" : "none") << '\n';
    return os.str();
}

inline std::uint64_t fnv1a_64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a_64(canonical_config(cfg))));
    return buf;
}

}  // namespace nst
