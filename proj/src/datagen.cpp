#include "sisvae/datagen.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sisvae/rng.hpp"

namespace sisvae {

namespace {

enum Stream : std::uint64_t {
    kCoregStream = 11,
    kPathStream = 12,
    kObsNoiseStream = 13,
    kMaskStream = 21,
    kPlacementStream = 22,
};

// Lower Cholesky factor of the RBF Gram matrix over integer offsets
// 0..n-1, with escalating jitter. Throws if 1e-2 jitter still fails.
Eigen::MatrixXd rbf_cholesky(std::size_t n, double lengthscale) {
    Eigen::MatrixXd k(n, n);
    const double inv = 1.0 / (2.0 * lengthscale * lengthscale);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double d = static_cast<double>(i) - static_cast<double>(j);
            k(i, j) = std::exp(-d * d * inv);
        }
    }
    for (double jitter = 1e-8; jitter <= 1e-2; jitter *= 10.0) {
        Eigen::MatrixXd kj = k + jitter * Eigen::MatrixXd::Identity(n, n);
        Eigen::LLT<Eigen::MatrixXd> llt(kj);
        if (llt.info() == Eigen::Success) return llt.matrixL();
    }
    throw std::runtime_error("rbf_cholesky: Cholesky failed even with jitter 1e-2 (n = " +
                             std::to_string(n) + ")");
}

std::string trim_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

void SynthConfig::validate() const {
    if (m < 1) throw std::invalid_argument("SynthConfig: m must be >= 1");
    if (t < 2) throw std::invalid_argument("SynthConfig: t must be >= 2");
    if (anomaly_prob < 0.0 || anomaly_prob > 1.0) {
        throw std::invalid_argument("SynthConfig: anomaly_prob must lie in [0, 1]");
    }
    if (!(kernel_lengthscale > 0.0)) {
        throw std::invalid_argument("SynthConfig: kernel_lengthscale must be > 0");
    }
    if (noise_base < 0.0) throw std::invalid_argument("SynthConfig: noise_base must be >= 0");
}

SeriesMatrix gen_correlated_series(const SynthConfig& config) {
    config.validate();
    const std::size_t m = config.m;
    Rng rng(derive_seed(config.seed, kCoregStream));
    Eigen::MatrixXd c(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) c(i, j) = rng.normal();
    }
    Eigen::MatrixXd b = c * c.transpose() + 0.1 * Eigen::MatrixXd::Identity(m, m);
    std::vector<double> coreg(m * m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) coreg[i * m + j] = b(i, j);
    }
    return gen_correlated_series(config, coreg);
}

SeriesMatrix gen_correlated_series(const SynthConfig& config,
                                   const std::vector<double>& coregionalization) {
    config.validate();
    const std::size_t m = config.m;
    const std::size_t t = config.t;
    if (coregionalization.size() != m * m) {
        throw std::invalid_argument("gen_correlated_series: coregionalization must be m x m");
    }

    Eigen::MatrixXd b(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) b(i, j) = coregionalization[i * m + j];
    }
    Eigen::LLT<Eigen::MatrixXd> b_llt(b);
    if (b_llt.info() != Eigen::Success) {
        throw std::runtime_error("gen_correlated_series: coregionalization is not positive "
                                 "definite");
    }
    const Eigen::MatrixXd l_b = b_llt.matrixL();
    const Eigen::MatrixXd l_k = rbf_cholesky(t, config.kernel_lengthscale);

    // chol(B (x) K) = chol(B) (x) chol(K): draw F = L_B H L_K^T with H iid
    // standard normal, giving cov(F_{it}, F_{js}) = B_{ij} K_{ts} without
    // ever forming the (m t) x (m t) matrix.
    Rng path_rng(derive_seed(config.seed, kPathStream));
    Eigen::MatrixXd h(m, t);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < t; ++j) h(i, j) = path_rng.normal();
    }
    Eigen::MatrixXd f = l_b * h * l_k.transpose();

    Rng noise_rng(derive_seed(config.seed, kObsNoiseStream));
    SeriesMatrix out;
    out.m = m;
    out.t = t;
    out.values.resize(m * t);
    out.labels.assign(m * t, 0);
    out.series_ids = SeriesMatrix::default_ids(m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < t; ++j) {
            const double sigma_t =
                config.noise_base * (1.0 + static_cast<double>(j + 1) / static_cast<double>(t));
            out.values[i * t + j] = f(i, j) + sigma_t * noise_rng.normal();
        }
    }
    return out;
}

SeriesMatrix inject_point_anomalies(const SeriesMatrix& series, double p, std::uint64_t seed) {
    series.check();
    if (p < 0.0 || p > 1.0) {
        throw std::invalid_argument("inject_point_anomalies: p must lie in [0, 1]");
    }
    SeriesMatrix out = series;
    if (out.labels.empty()) out.labels.assign(out.m * out.t, 0);
    Rng rng(derive_seed(seed, kMaskStream));
    for (std::size_t i = 0; i < out.m; ++i) {
        for (std::size_t j = 0; j < out.t; ++j) {
            if (!rng.bernoulli(p)) continue;
            const double lambda = std::max(std::fabs(out.at(i, j)), 0.5);
            const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
            out.at(i, j) += sign * static_cast<double>(rng.poisson(lambda));
            out.labels[i * out.t + j] = 1;
        }
    }
    return out;
}

SeriesMatrix inject_composite_point_anomalies(const SeriesMatrix& series, double p,
                                              std::uint64_t seed) {
    series.check();
    if (p < 0.0 || p > 1.0) {
        throw std::invalid_argument("inject_composite_point_anomalies: p must lie in [0, 1]");
    }
    SeriesMatrix out = series;
    if (out.labels.empty()) out.labels.assign(out.m * out.t, 0);
    Rng rng(derive_seed(seed, kMaskStream));
    for (std::size_t i = 0; i < out.m; ++i) {
        for (std::size_t j = 0; j < out.t; ++j) {
            if (!rng.bernoulli(p)) continue;
            out.at(i, j) += static_cast<double>(rng.poisson(1.0)) + rng.normal() + 0.2;
            out.labels[i * out.t + j] = 1;
        }
    }
    return out;
}

SeriesMatrix gen_mackey_glass(std::size_t n, double gamma, double beta, double alpha,
                              std::size_t tau, double dt, double x0, std::uint64_t seed) {
    (void)seed;
    if (n < 1) throw std::invalid_argument("gen_mackey_glass: n must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("gen_mackey_glass: dt must be > 0");
    const auto delay = static_cast<std::size_t>(
        std::llround(static_cast<double>(tau) / dt));

    // trajectory[k] is the state after k steps; indices <= 0 read x0
    std::vector<double> trajectory;
    trajectory.reserve(n + 1);
    trajectory.push_back(x0);
    for (std::size_t k = 0; k < n; ++k) {
        const double x_now = trajectory.back();
        const double x_delayed =
            (k >= delay) ? trajectory[k - delay] : x0;
        const double drift =
            alpha * x_delayed / (1.0 + std::pow(x_delayed, beta)) - gamma * x_now;
        const double x_next = x_now + dt * drift;
        if (!std::isfinite(x_next)) {
            throw std::runtime_error("gen_mackey_glass: state became non-finite at step " +
                                     std::to_string(k + 1));
        }
        trajectory.push_back(x_next);
    }

    SeriesMatrix out;
    out.m = 1;
    out.t = n;
    out.values.assign(trajectory.begin() + 1, trajectory.end());
    out.labels.assign(n, 0);
    out.series_ids = {"s1"};
    return out;
}

SeriesMatrix inject_subseq_anomalies(const SeriesMatrix& series, std::size_t count,
                                     std::size_t len_min, std::size_t len_max,
                                     std::uint64_t seed) {
    series.check();
    if (count == 0) return series;
    if (len_min < 1 || len_min > len_max || len_max > series.t) {
        throw std::invalid_argument("inject_subseq_anomalies: need 1 <= len_min <= len_max <= T");
    }
    SeriesMatrix out = series;
    if (out.labels.empty()) out.labels.assign(out.m * out.t, 0);

    Rng rng(derive_seed(seed, kPlacementStream));
    for (std::size_t w = 0; w < count; ++w) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < 1000 && !placed; ++attempt) {
            const auto row = static_cast<std::size_t>(rng.below(out.m));
            const auto len = static_cast<std::size_t>(
                rng.uniform_int(static_cast<std::int64_t>(len_min),
                                static_cast<std::int64_t>(len_max)));
            const auto start = static_cast<std::size_t>(rng.below(out.t - len + 1));
            bool overlaps = false;
            for (std::size_t j = start; j < start + len; ++j) {
                if (out.labels[row * out.t + j]) {
                    overlaps = true;
                    break;
                }
            }
            if (overlaps) continue;

            const Eigen::MatrixXd l = rbf_cholesky(len, 0.3);
            Eigen::VectorXd eta(len);
            for (std::size_t j = 0; j < len; ++j) eta(j) = rng.normal();
            const Eigen::VectorXd draw = l * eta;
            for (std::size_t j = 0; j < len; ++j) {
                out.at(row, start + j) = draw(j);
                out.labels[row * out.t + start + j] = 1;
            }
            placed = true;
        }
        if (!placed) {
            throw std::runtime_error(
                "inject_subseq_anomalies: no non-overlapping placement found in 1000 attempts");
        }
    }
    return out;
}

std::string label_path_for(const std::string& data_path) {
    const auto dot = data_path.rfind('.');
    const auto slash = data_path.find_last_of("/\\");
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
        return data_path + ".labels";
    }
    return data_path.substr(0, dot) + ".labels" + data_path.substr(dot);
}

void save_csv(const SeriesMatrix& series, const std::string& path) {
    series.check();
    const auto ids =
        series.series_ids.empty() ? SeriesMatrix::default_ids(series.m) : series.series_ids;

    auto write_matrix = [&](const std::string& file, auto value_at) {
        std::ofstream out(file, std::ios::binary);
        if (!out) throw std::runtime_error("save_csv: cannot open " + file);
        out << "t";
        for (const auto& id : ids) out << ',' << id;
        out << '\n';
        char buf[64];
        for (std::size_t j = 0; j < series.t; ++j) {
            out << j;
            for (std::size_t i = 0; i < series.m; ++i) {
                std::snprintf(buf, sizeof(buf), ",%.17g", value_at(i, j));
                out << buf;
            }
            out << '\n';
        }
        if (!out) throw std::runtime_error("save_csv: write failed for " + file);
    };

    write_matrix(path, [&](std::size_t i, std::size_t j) { return series.at(i, j); });
    if (series.has_labels()) {
        write_matrix(label_path_for(path), [&](std::size_t i, std::size_t j) {
            return static_cast<double>(series.label_at(i, j));
        });
    }
}

namespace {

// Parses one data file in the `t,<ids>` layout into rows-by-timestep order.
void load_matrix(const std::string& path, std::vector<std::string>& ids,
                 std::vector<double>& values, std::size_t& t_len) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
    line = trim_cr(line);
    {
        std::istringstream hs(line);
        std::string col;
        if (!std::getline(hs, col, ',') || col != "t") {
            throw std::runtime_error("load_csv: header of " + path +
                                     " must start with 't', got '" + col + "' (line 1)");
        }
        ids.clear();
        while (std::getline(hs, col, ',')) ids.push_back(col);
        if (ids.empty()) {
            throw std::runtime_error("load_csv: header of " + path + " names no series (line 1)");
        }
    }
    const std::size_t m = ids.size();
    std::vector<std::vector<double>> rows;  // per timestep
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim_cr(line);
        if (line.empty()) continue;
        std::vector<double> row;
        row.reserve(m);
        const char* p = line.data();
        const char* end = p + line.size();
        std::size_t field = 0;
        while (p <= end) {
            const char* comma = std::find(p, end, ',');
            if (field > 0) {  // field 0 is the timestep index
                double v = 0.0;
                auto rc = std::from_chars(p, comma, v);
                if (rc.ec != std::errc{} || rc.ptr != comma) {
                    throw std::runtime_error("load_csv: bad value in " + path + " at line " +
                                             std::to_string(line_no));
                }
                row.push_back(v);
            }
            ++field;
            if (comma == end) break;
            p = comma + 1;
        }
        if (row.size() != m) {
            throw std::runtime_error("load_csv: expected " + std::to_string(m + 1) +
                                     " columns but got " + std::to_string(row.size() + 1) +
                                     " in " + path + " at line " + std::to_string(line_no));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("load_csv: no data rows in " + path);
    t_len = rows.size();
    values.assign(m * t_len, 0.0);
    for (std::size_t j = 0; j < t_len; ++j) {
        for (std::size_t i = 0; i < m; ++i) values[i * t_len + j] = rows[j][i];
    }
}

}  // namespace

SeriesMatrix load_csv(const std::string& path) {
    SeriesMatrix out;
    load_matrix(path, out.series_ids, out.values, out.t);
    out.m = out.series_ids.size();

    const std::string lpath = label_path_for(path);
    if (std::ifstream probe(lpath); probe.good()) {
        std::vector<std::string> lids;
        std::vector<double> lvalues;
        std::size_t lt = 0;
        load_matrix(lpath, lids, lvalues, lt);
        if (lids.size() != out.m || lt != out.t) {
            throw std::runtime_error("load_csv: label file " + lpath +
                                     " shape differs from data");
        }
        out.labels.resize(lvalues.size());
        for (std::size_t i = 0; i < lvalues.size(); ++i) {
            if (lvalues[i] != 0.0 && lvalues[i] != 1.0) {
                throw std::runtime_error("load_csv: label file " + lpath +
                                         " contains a value outside {0,1}");
            }
            out.labels[i] = lvalues[i] == 1.0 ? 1 : 0;
        }
    }
    out.check();
    return out;
}

}  // namespace sisvae
