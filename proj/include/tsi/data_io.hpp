#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tsi/errors.hpp"
#include "tsi/ica.hpp"  // as_eigen
#include "tsi/rng.hpp"
#include "tsi/tensor.hpp"

// Dataset loading, chronological splitting, standardization, sliding windows,
// and the seeded synthetic generator that carries its own ground truth.
namespace tsi {

struct DatasetBundle {
    std::string name;
    std::vector<int64_t> timestamps;  // epoch seconds, strictly increasing
    Tensor values;                    // [T, m]
    std::vector<std::string> feature_names;

    int64_t length() const { return values.dim(0); }
    int64_t width() const { return values.dim(1); }
};

// Per-feature statistics fit on the training split only (population std).
struct Scaler {
    Tensor mean;  // [m]
    Tensor stddev;

    Tensor transform(const Tensor& rows) const {
        Tensor out = rows;
        const int64_t m = mean.dim(0);
        for (int64_t i = 0; i < rows.dim(0); ++i)
            for (int64_t j = 0; j < m; ++j) out.at(i, j) = (rows.at(i, j) - mean.at(j)) / stddev.at(j);
        return out;
    }

    Tensor inverse(const Tensor& rows) const {
        Tensor out = rows;
        const int64_t m = mean.dim(0);
        for (int64_t i = 0; i < rows.dim(0); ++i)
            for (int64_t j = 0; j < m; ++j) out.at(i, j) = rows.at(i, j) * stddev.at(j) + mean.at(j);
        return out;
    }
};

struct WindowSpec {
    int64_t lookback = 128;  // h
    int64_t horizon = 24;    // k
    int64_t stride = 1;
};

namespace detail {

inline bool parse_timestamp(const std::string& text, int64_t& out) {
    for (const char* fmt : {"%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d"}) {
        std::tm tm{};
        std::istringstream ss(text);
        ss >> std::get_time(&tm, fmt);
        if (!ss.fail()) {
            std::string rest;
            ss >> rest;
            if (!rest.empty()) continue;
            out = timegm(&tm);
            return true;
        }
    }
    return false;
}

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

}  // namespace detail

// CSV contract: header row; first column ISO-8601 timestamps; remaining
// columns decimal numerals. Any NaN or unparseable cell is a hard error that
// names its position.
inline DatasetBundle load_csv(const std::string& path, const std::string& name = "") {
    std::ifstream in(path);
    if (!in) throw DataError("load_csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("load_csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = detail::split_line(line);
    if (header.size() < 2) throw DataError("load_csv: need a timestamp column plus features");

    DatasetBundle bundle;
    bundle.name = name.empty() ? path : name;
    bundle.feature_names.assign(header.begin() + 1, header.end());
    const int64_t m = static_cast<int64_t>(bundle.feature_names.size());

    std::vector<double> flat;
    int64_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        std::vector<std::string> cells = detail::split_line(line);
        if (static_cast<int64_t>(cells.size()) != m + 1)
            throw DataError("load_csv: row " + std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(m + 1));
        int64_t ts = 0;
        if (!detail::parse_timestamp(cells[0], ts))
            throw DataError("load_csv: unparseable timestamp '" + cells[0] + "' at row " +
                            std::to_string(row));
        if (!bundle.timestamps.empty() && ts <= bundle.timestamps.back())
            throw DataError("load_csv: timestamps not strictly increasing at row " +
                            std::to_string(row));
        bundle.timestamps.push_back(ts);
        for (int64_t j = 0; j < m; ++j) {
            const std::string& cell = cells[static_cast<size_t>(j + 1)];
            const char* begin = cell.c_str();
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin || *end != '\0')
                throw DataError("load_csv: non-numeric value '" + cell + "' at row " +
                                std::to_string(row) + ", column " +
                                bundle.feature_names[static_cast<size_t>(j)]);
            if (std::isnan(v))
                throw DataError("load_csv: NaN at row " + std::to_string(row) + ", column " +
                                bundle.feature_names[static_cast<size_t>(j)]);
            flat.push_back(v);
        }
    }
    if (row == 0) throw DataError("load_csv: no data rows in " + path);
    bundle.values = Tensor({row, m}, std::move(flat));
    return bundle;
}

struct SplitResult {
    Tensor train, val, test;  // standardized
    Scaler scaler;
};

// Chronological contiguous split; the scaler is fit on the training rows only
// and applied to all three splits. min_split_rows guards windowability.
inline SplitResult split_standardize(const DatasetBundle& bundle, double train_ratio = 0.6,
                                     double val_ratio = 0.2, int64_t min_split_rows = 1) {
    const int64_t T = bundle.length(), m = bundle.width();
    const int64_t i1 = static_cast<int64_t>(std::floor(train_ratio * static_cast<double>(T)));
    const int64_t i2 =
        static_cast<int64_t>(std::floor((train_ratio + val_ratio) * static_cast<double>(T)));
    if (i1 < min_split_rows || i2 - i1 < min_split_rows || T - i2 < min_split_rows)
        throw DataError("split_standardize: split sizes " + std::to_string(i1) + "/" +
                        std::to_string(i2 - i1) + "/" + std::to_string(T - i2) +
                        " too small for windowing (need >= " + std::to_string(min_split_rows) +
                        " rows each)");

    auto slice = [&](int64_t lo, int64_t hi) {
        Tensor out = Tensor::zeros({hi - lo, m});
        for (int64_t i = lo; i < hi; ++i)
            for (int64_t j = 0; j < m; ++j) out.at(i - lo, j) = bundle.values.at(i, j);
        return out;
    };
    Tensor train_raw = slice(0, i1), val_raw = slice(i1, i2), test_raw = slice(i2, T);

    Scaler scaler;
    scaler.mean = Tensor::zeros({m});
    scaler.stddev = Tensor::zeros({m});
    for (int64_t j = 0; j < m; ++j) {
        double mu = 0.0;
        for (int64_t i = 0; i < i1; ++i) mu += train_raw.at(i, j);
        mu /= static_cast<double>(i1);
        double var = 0.0;
        for (int64_t i = 0; i < i1; ++i) {
            const double d = train_raw.at(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(i1);
        if (!(var > 0.0))
            throw DataError("split_standardize: zero-variance feature '" +
                            bundle.feature_names[static_cast<size_t>(j)] + "' in training split");
        scaler.mean.at(j) = mu;
        scaler.stddev.at(j) = std::sqrt(var);
    }

    SplitResult res;
    res.scaler = scaler;
    res.train = scaler.transform(train_raw);
    res.val = scaler.transform(val_raw);
    res.test = scaler.transform(test_raw);
    return res;
}

// Sliding (X, Y) pairs: X holds h rows, Y the k rows immediately after, at
// offsets 0, stride, 2*stride, ...
inline std::vector<std::pair<Tensor, Tensor>> make_windows(const Tensor& split,
                                                           const WindowSpec& spec) {
    if (spec.lookback < 1 || spec.horizon < 1 || spec.stride < 1)
        throw std::invalid_argument("make_windows: lookback, horizon, stride must be >= 1");
    const int64_t T = split.dim(0), m = split.dim(1);
    const int64_t need = spec.lookback + spec.horizon;
    if (T < need)
        throw DataError("make_windows: split of " + std::to_string(T) +
                        " rows is shorter than lookback+horizon = " + std::to_string(need));
    const int64_t count = (T - need) / spec.stride + 1;
    std::vector<std::pair<Tensor, Tensor>> out;
    out.reserve(static_cast<size_t>(count));
    for (int64_t w = 0; w < count; ++w) {
        const int64_t base = w * spec.stride;
        Tensor X = Tensor::zeros({spec.lookback, m});
        Tensor Y = Tensor::zeros({spec.horizon, m});
        for (int64_t t = 0; t < spec.lookback; ++t)
            for (int64_t j = 0; j < m; ++j) X.at(t, j) = split.at(base + t, j);
        for (int64_t t = 0; t < spec.horizon; ++t)
            for (int64_t j = 0; j < m; ++j) Y.at(t, j) = split.at(base + spec.lookback + t, j);
        out.emplace_back(std::move(X), std::move(Y));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator: values = trend + seasonal + f(A * I) + noise, with f
// identity or tanh. Ground truth rides along for oracle tests.
// ---------------------------------------------------------------------------
enum class SourceKind { Uniform, Laplace, Sinusoid };

inline SourceKind source_kind_from_string(const std::string& s) {
    if (s == "uniform") return SourceKind::Uniform;
    if (s == "laplace") return SourceKind::Laplace;
    if (s == "sinusoid") return SourceKind::Sinusoid;
    throw ConfigError("unknown source kind '" + s + "' (expected uniform|laplace|sinusoid)");
}

struct SyntheticSpec {
    int64_t length = 2000;
    std::vector<double> trend_slopes;         // per feature, may be empty
    std::vector<double> seasonal_periods;     // per feature, 0 disables
    std::vector<double> seasonal_amplitudes;  // per feature
    std::vector<SourceKind> source_kinds;     // one per source
    std::vector<double> source_periods;       // used by sinusoid sources
    Tensor mixing;                            // [m, n_sources], square invertible
    double noise_sigma = 0.0;
    bool tanh_mixing = false;
    uint64_t seed = 0;
};

struct SyntheticTruth {
    Tensor trend;     // [T, m]
    Tensor seasonal;  // [T, m]
    Tensor sources;   // [T, n]
    Tensor mixing;    // [m, n]
};

struct SyntheticData {
    DatasetBundle bundle;
    SyntheticTruth truth;
};

inline SyntheticData gen_synthetic(const SyntheticSpec& spec) {
    const int64_t T = spec.length;
    if (T < 2) throw ConfigError("gen_synthetic: length must be >= 2");
    if (spec.mixing.rank() != 2 || spec.mixing.dim(0) != spec.mixing.dim(1))
        throw ConfigError("gen_synthetic: mixing matrix must be square");
    const int64_t m = spec.mixing.dim(0);
    const int64_t n = spec.mixing.dim(1);
    if (static_cast<int64_t>(spec.source_kinds.size()) != n)
        throw ConfigError("gen_synthetic: need one source kind per mixing column");
    {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(as_eigen(spec.mixing));
        if (!lu.isInvertible())
            throw ConfigError("gen_synthetic: mixing matrix is singular");
    }
    for (double p : spec.seasonal_periods)
        if (p != 0.0 && p < 2.0) throw ConfigError("gen_synthetic: seasonal periods must be >= 2");

    Rng rng(spec.seed);
    SyntheticData out;
    out.truth.mixing = spec.mixing;
    out.truth.trend = Tensor::zeros({T, m});
    out.truth.seasonal = Tensor::zeros({T, m});
    out.truth.sources = Tensor::zeros({T, n});

    // Sources first, column by column (sinusoids consume one phase draw).
    for (int64_t j = 0; j < n; ++j) {
        const SourceKind kind = spec.source_kinds[static_cast<size_t>(j)];
        if (kind == SourceKind::Sinusoid) {
            double period = 37.0;
            if (j < static_cast<int64_t>(spec.source_periods.size()) &&
                spec.source_periods[static_cast<size_t>(j)] != 0.0) {
                period = spec.source_periods[static_cast<size_t>(j)];
                if (period < 2.0) throw ConfigError("gen_synthetic: source periods must be >= 2");
            }
            const double phase = rng.uniform(0.0, 2.0 * M_PI);
            for (int64_t t = 0; t < T; ++t)
                out.truth.sources.at(t, j) =
                    std::sqrt(2.0) * std::sin(2.0 * M_PI * static_cast<double>(t) / period + phase);
        } else if (kind == SourceKind::Uniform) {
            for (int64_t t = 0; t < T; ++t)
                out.truth.sources.at(t, j) = rng.uniform(-std::sqrt(3.0), std::sqrt(3.0));
        } else {
            for (int64_t t = 0; t < T; ++t) {
                const double u = rng.uniform() - 0.5;
                out.truth.sources.at(t, j) = -(1.0 / std::sqrt(2.0)) * (u < 0 ? -1.0 : 1.0) *
                                             std::log(1.0 - 2.0 * std::abs(u));
            }
        }
    }

    for (int64_t f = 0; f < m; ++f) {
        const double slope =
            f < static_cast<int64_t>(spec.trend_slopes.size()) ? spec.trend_slopes[f] : 0.0;
        const double period =
            f < static_cast<int64_t>(spec.seasonal_periods.size()) ? spec.seasonal_periods[f] : 0.0;
        const double amp = f < static_cast<int64_t>(spec.seasonal_amplitudes.size())
                               ? spec.seasonal_amplitudes[f]
                               : 0.0;
        for (int64_t t = 0; t < T; ++t) {
            out.truth.trend.at(t, f) = slope * static_cast<double>(t);
            if (period >= 2.0 && amp != 0.0)
                out.truth.seasonal.at(t, f) =
                    amp * std::sin(2.0 * M_PI * static_cast<double>(t) / period);
        }
    }

    Tensor values = Tensor::zeros({T, m});
    for (int64_t t = 0; t < T; ++t) {
        for (int64_t f = 0; f < m; ++f) {
            double mixed = 0.0;
            for (int64_t j = 0; j < n; ++j) mixed += spec.mixing.at(f, j) * out.truth.sources.at(t, j);
            if (spec.tanh_mixing) mixed = std::tanh(mixed);
            values.at(t, f) = out.truth.trend.at(t, f) + out.truth.seasonal.at(t, f) + mixed;
        }
    }
    if (spec.noise_sigma > 0.0)
        for (double& v : values.data) v += rng.normal(0.0, spec.noise_sigma);

    out.bundle.name = "synthetic";
    out.bundle.values = std::move(values);
    out.bundle.timestamps.resize(static_cast<size_t>(T));
    const int64_t epoch0 = 1451606400;  // 2016-01-01 00:00:00 UTC, hourly cadence
    for (int64_t t = 0; t < T; ++t) out.bundle.timestamps[static_cast<size_t>(t)] = epoch0 + t * 3600;
    out.bundle.feature_names.resize(static_cast<size_t>(m));
    for (int64_t f = 0; f < m; ++f) out.bundle.feature_names[static_cast<size_t>(f)] = "f" + std::to_string(f);
    return out;
}

inline void write_csv(const DatasetBundle& bundle, const std::string& path) {
    std::ofstream outf(path);
    if (!outf) throw DataError("write_csv: cannot open " + path + " for writing");
    outf << "date";
    for (const auto& name : bundle.feature_names) outf << ',' << name;
    outf << '\n';
    char buf[64];
    for (int64_t t = 0; t < bundle.length(); ++t) {
        const time_t ts = static_cast<time_t>(bundle.timestamps[static_cast<size_t>(t)]);
        std::tm tm{};
        gmtime_r(&ts, &tm);
        std::strftime(buf, sizeof(buf), "%Y-%m-%d %H:%M:%S", &tm);
        outf << buf;
        for (int64_t j = 0; j < bundle.width(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", bundle.values.at(t, j));
            outf << ',' << buf;
        }
        outf << '\n';
    }
}

namespace detail {
inline nlohmann::json matrix_json(const Tensor& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (int64_t i = 0; i < t.dim(0); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int64_t j = 0; j < t.dim(1); ++j) row.push_back(t.at(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}
}  // namespace detail

inline void write_truth_json(const SyntheticTruth& truth, const std::string& path) {
    nlohmann::json j;
    j["mixing"] = detail::matrix_json(truth.mixing);
    j["trend"] = detail::matrix_json(truth.trend);
    j["seasonal"] = detail::matrix_json(truth.seasonal);
    j["sources"] = detail::matrix_json(truth.sources);
    std::ofstream outf(path);
    if (!outf) throw DataError("write_truth_json: cannot open " + path + " for writing");
    outf << j.dump() << '\n';
}

}  // namespace tsi
