#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tsi/data_io.hpp"
#include "tsi/errors.hpp"
#include "tsi/tensor.hpp"

// Flat key=value run configuration. Absent keys take the documented defaults;
// unknown keys are rejected by name.
namespace tsi {

struct RunConfig {
    std::string dataset;       // CSV path
    std::string dataset_name;  // label for metric rows; defaults to the path

    int64_t window = 128;  // h
    std::vector<int64_t> horizons = {24, 48, 168, 336, 720};

    // Encoder dimensions.
    int64_t d_hidden = 64;
    int64_t d_tr = 64;
    int64_t d_s = 64;
    int64_t trend_m = 5;  // kernel j has dilation 2^j, j = 0..trend_m

    // Contrastive training.
    int64_t steps = 1000;
    int64_t batch = 8;
    int64_t queue = 256;
    double tau = 0.07;
    double mu = 0.999;
    double lr = 1e-3;
    double p_apply = 0.5;
    double scale_sigma = 0.3;
    double shift_sigma = 0.3;
    double jitter_sigma = 0.3;

    // Independent-component path.
    int64_t n_i = 0;  // 0 means "one candidate component per observed variable"
    double ica_lambda = 1e-3;
    double ica_tol = 1e-4;
    int64_t ica_max_iter = 200;
    bool ica_on_reconstruction = false;  // feed FastICA the reconstruction instead of the latent
    int64_t ae_hidden = 32;
    int64_t ae_steps = 500;
    int64_t ae_batch = 64;
    double ae_lr = 1e-3;

    std::vector<double> alpha_grid = {0.1, 0.2, 0.5, 1,   2,   5,    10,
                                      20,  50,  100, 200, 500, 1000};
    uint64_t seed = 42;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int64_t out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

template <typename T, typename F>
inline std::vector<T> parse_list(const std::string& key, const std::string& v, F&& one) {
    std::vector<T> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("config: key '" + key + "' has an empty list element");
        out.push_back(one(key, item));
    }
    if (out.empty()) throw ConfigError("config: key '" + key + "' expects a non-empty list");
    return out;
}

}  // namespace detail

inline RunConfig parse_run_config_text(std::istream& in, const std::string& origin) {
    RunConfig cfg;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + origin + ":" + std::to_string(lineno) +
                              " is not a key=value line");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));

        if (key == "dataset") cfg.dataset = value;
        else if (key == "dataset_name") cfg.dataset_name = value;
        else if (key == "window") cfg.window = detail::parse_int(key, value);
        else if (key == "horizons") cfg.horizons = detail::parse_list<int64_t>(key, value, detail::parse_int);
        else if (key == "d_hidden") cfg.d_hidden = detail::parse_int(key, value);
        else if (key == "d_tr") cfg.d_tr = detail::parse_int(key, value);
        else if (key == "d_s") cfg.d_s = detail::parse_int(key, value);
        else if (key == "trend_m") cfg.trend_m = detail::parse_int(key, value);
        else if (key == "steps") cfg.steps = detail::parse_int(key, value);
        else if (key == "batch") cfg.batch = detail::parse_int(key, value);
        else if (key == "queue") cfg.queue = detail::parse_int(key, value);
        else if (key == "tau") cfg.tau = detail::parse_double(key, value);
        else if (key == "mu") cfg.mu = detail::parse_double(key, value);
        else if (key == "lr") cfg.lr = detail::parse_double(key, value);
        else if (key == "p_apply") cfg.p_apply = detail::parse_double(key, value);
        else if (key == "scale_sigma") cfg.scale_sigma = detail::parse_double(key, value);
        else if (key == "shift_sigma") cfg.shift_sigma = detail::parse_double(key, value);
        else if (key == "jitter_sigma") cfg.jitter_sigma = detail::parse_double(key, value);
        else if (key == "n_i") cfg.n_i = detail::parse_int(key, value);
        else if (key == "ica_lambda") cfg.ica_lambda = detail::parse_double(key, value);
        else if (key == "ica_tol") cfg.ica_tol = detail::parse_double(key, value);
        else if (key == "ica_max_iter") cfg.ica_max_iter = detail::parse_int(key, value);
        else if (key == "ica_on_reconstruction") cfg.ica_on_reconstruction = detail::parse_bool(key, value);
        else if (key == "ae_hidden") cfg.ae_hidden = detail::parse_int(key, value);
        else if (key == "ae_steps") cfg.ae_steps = detail::parse_int(key, value);
        else if (key == "ae_batch") cfg.ae_batch = detail::parse_int(key, value);
        else if (key == "ae_lr") cfg.ae_lr = detail::parse_double(key, value);
        else if (key == "alpha_grid") cfg.alpha_grid = detail::parse_list<double>(key, value, detail::parse_double);
        else if (key == "seed") cfg.seed = static_cast<uint64_t>(detail::parse_int(key, value));
        else throw ConfigError("config: unknown key '" + key + "' at " + origin + ":" + std::to_string(lineno));
    }

    if (cfg.window < 2) throw ConfigError("config: window must be >= 2");
    if (cfg.horizons.empty()) throw ConfigError("config: horizons must be non-empty");
    for (int64_t h : cfg.horizons)
        if (h < 1) throw ConfigError("config: horizons must be >= 1");
    if (cfg.d_hidden < 1 || cfg.d_tr < 1 || cfg.d_s < 1 || cfg.trend_m < 0)
        throw ConfigError("config: encoder dimensions must be positive");
    if (cfg.steps < 1 || cfg.batch < 1 || cfg.queue < 1)
        throw ConfigError("config: steps, batch and queue must be >= 1");
    if (cfg.tau <= 0.0) throw ConfigError("config: tau must be positive");
    if (cfg.mu < 0.0 || cfg.mu > 1.0) throw ConfigError("config: mu must lie in [0, 1]");
    if (cfg.p_apply < 0.0 || cfg.p_apply > 1.0) throw ConfigError("config: p_apply must lie in [0, 1]");
    if (cfg.n_i < 0) throw ConfigError("config: n_i must be >= 0");
    if (cfg.ica_lambda < 0.0) throw ConfigError("config: ica_lambda must be >= 0");
    if (cfg.alpha_grid.empty()) throw ConfigError("config: alpha_grid must be non-empty");
    if (cfg.dataset_name.empty()) cfg.dataset_name = cfg.dataset;
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    return parse_run_config_text(in, path);
}

// Synthetic-spec file, same key=value format. A missing mixing matrix is
// drawn (seeded, invertibility-checked) from the spec seed.
inline SyntheticSpec parse_synth_spec_text(std::istream& in, const std::string& origin) {
    SyntheticSpec spec;
    std::vector<double> mixing_flat;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("synth spec: " + origin + ":" + std::to_string(lineno) +
                              " is not a key=value line");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));

        if (key == "length") spec.length = detail::parse_int(key, value);
        else if (key == "sources")
            spec.source_kinds = [&] {
                std::vector<SourceKind> kinds;
                for (const std::string& s :
                     detail::parse_list<std::string>(key, value, [](const std::string&, const std::string& v2) { return v2; }))
                    kinds.push_back(source_kind_from_string(s));
                return kinds;
            }();
        else if (key == "source_periods") spec.source_periods = detail::parse_list<double>(key, value, detail::parse_double);
        else if (key == "trend_slopes") spec.trend_slopes = detail::parse_list<double>(key, value, detail::parse_double);
        else if (key == "seasonal_periods") spec.seasonal_periods = detail::parse_list<double>(key, value, detail::parse_double);
        else if (key == "seasonal_amplitudes") spec.seasonal_amplitudes = detail::parse_list<double>(key, value, detail::parse_double);
        else if (key == "noise_sigma") spec.noise_sigma = detail::parse_double(key, value);
        else if (key == "tanh_mixing") spec.tanh_mixing = detail::parse_bool(key, value);
        else if (key == "seed") spec.seed = static_cast<uint64_t>(detail::parse_int(key, value));
        else if (key == "mixing") mixing_flat = detail::parse_list<double>(key, value, detail::parse_double);
        else throw ConfigError("synth spec: unknown key '" + key + "' at " + origin + ":" + std::to_string(lineno));
    }

    if (spec.source_kinds.empty())
        throw ConfigError("synth spec: 'sources' must list at least one source kind");
    const int64_t n = static_cast<int64_t>(spec.source_kinds.size());
    if (!mixing_flat.empty()) {
        if (static_cast<int64_t>(mixing_flat.size()) != n * n)
            throw ConfigError("synth spec: mixing needs " + std::to_string(n * n) +
                              " row-major entries for " + std::to_string(n) + " sources");
        spec.mixing = Tensor({n, n}, std::move(mixing_flat));
    } else {
        Rng mix_rng(spec.seed * 2654435761ULL + 1);
        while (true) {
            Tensor A = Tensor::zeros({n, n});
            for (double& v : A.data) v = mix_rng.uniform(-1.0, 1.0);
            Eigen::FullPivLU<Eigen::MatrixXd> lu(as_eigen(A));
            if (lu.isInvertible() && std::abs(lu.determinant()) > 0.05) {
                spec.mixing = std::move(A);
                break;
            }
        }
    }
    return spec;
}

inline SyntheticSpec load_synth_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("synth spec: cannot open " + path);
    return parse_synth_spec_text(in, path);
}

}  // namespace tsi
