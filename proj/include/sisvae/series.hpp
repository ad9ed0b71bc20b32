#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sisvae {

// M correlated series over T timesteps, row-major, with an optional binary
// anomaly-label matrix of identical shape.
struct SeriesMatrix {
    std::size_t m = 0;
    std::size_t t = 0;
    std::vector<double> values;        // m * t
    std::vector<std::uint8_t> labels;  // empty, or m * t of {0,1}
    std::vector<std::string> series_ids;

    bool has_labels() const { return !labels.empty(); }

    double& at(std::size_t row, std::size_t col) { return values[row * t + col]; }
    double at(std::size_t row, std::size_t col) const { return values[row * t + col]; }

    std::uint8_t label_at(std::size_t row, std::size_t col) const {
        return labels[row * t + col];
    }

    void check() const {
        if (m == 0 || t == 0 || values.size() != m * t) {
            throw std::invalid_argument("SeriesMatrix: values do not form an m x t matrix");
        }
        if (!labels.empty() && labels.size() != m * t) {
            throw std::invalid_argument("SeriesMatrix: label matrix shape differs from values");
        }
        if (!series_ids.empty() && series_ids.size() != m) {
            throw std::invalid_argument("SeriesMatrix: series_ids count differs from row count");
        }
    }

    static std::vector<std::string> default_ids(std::size_t m) {
        std::vector<std::string> ids;
        ids.reserve(m);
        for (std::size_t i = 0; i < m; ++i) ids.push_back("s" + std::to_string(i + 1));
        return ids;
    }
};

// An M x W window of a SeriesMatrix, together with the timestep it starts at.
struct Chunk {
    std::size_t start = 0;
    std::size_t m = 0;
    std::size_t w = 0;
    std::vector<double> values;  // m * w, row-major

    double at(std::size_t row, std::size_t col) const { return values[row * w + col]; }

    // column t as a dense vector (one observation x_t across the M series)
    std::vector<double> column(std::size_t col) const {
        std::vector<double> out(m);
        for (std::size_t i = 0; i < m; ++i) out[i] = values[i * w + col];
        return out;
    }
};

}  // namespace sisvae
