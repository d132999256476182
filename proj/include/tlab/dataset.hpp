#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "binio.hpp"
#include "errors.hpp"
#include "patch.hpp"

namespace tlab {

enum class Split : std::uint8_t { train = 0, validation = 1, test = 2 };

inline const char* split_name(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    }
    return "?";
}

struct SplitFractions {
    double train = 0.6;
    double validation = 0.2;
    double test = 0.2;
};

struct FeatureRange {
    std::string name;
    double min = 0.0;
    double max = 0.0;
};

struct SchemaMeta {
    std::vector<FeatureRange> features;
    std::string label_column;
    std::array<std::string, 2> label_values;  // raw value mapped to class 0 / 1
};

struct Dataset {
    std::string id;
    std::size_t input_side = 0;
    std::vector<Patch> patches;
    std::vector<Split> split;  // parallel to patches
    SchemaMeta schema;

    std::vector<std::size_t> indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < split.size(); ++i) {
            if (split[i] == s) out.push_back(i);
        }
        return out;
    }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.input_side == b.input_side && a.patches == b.patches && a.split == b.split;
    }
};

// counts[split][class]
using SplitCounts = std::array<std::array<std::size_t, 2>, 3>;

inline SplitCounts split_counts(const Dataset& d) {
    SplitCounts c{};
    for (std::size_t i = 0; i < d.patches.size(); ++i) {
        c[static_cast<std::size_t>(d.split[i])][d.patches[i].label & 1u]++;
    }
    return c;
}

// Per-class shuffle, then the first round(n * train) go to train, the next
// round(n * validation) to validation, the rest to test.
inline std::vector<Split> stratified_split(const std::vector<Patch>& patches, const SplitFractions& f,
                                           std::uint64_t seed) {
    const double sum = f.train + f.validation + f.test;
    if (f.train < 0 || f.validation < 0 || f.test < 0 || std::fabs(sum - 1.0) > 1e-6) {
        throw ConfigError("split fractions must be non-negative and sum to 1");
    }
    std::vector<Split> out(patches.size(), Split::test);
    std::mt19937_64 rng(seed);
    for (std::uint8_t cls = 0; cls < 2; ++cls) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < patches.size(); ++i) {
            if (patches[i].label == cls) idx.push_back(i);
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n = static_cast<double>(idx.size());
        const auto n_train = static_cast<std::size_t>(std::llround(n * f.train));
        const auto n_val = std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(n * f.validation)));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            out[idx[k]] = k < n_train ? Split::train : (k < n_train + n_val ? Split::validation : Split::test);
        }
    }
    return out;
}

// Per-pixel noise standard deviation of synthetic patches, in byte units.
inline constexpr double kSynthNoiseSigma = 2.55;
inline constexpr double kSynthBaseLevel = 128.0;

// Class c patches are 128 + sigma * (z + s_c * (separation / 2) * d), with z
// iid standard normal per pixel, s_c = -1 / +1, and d a seeded random sign
// pattern fixed per dataset. Rounded and clamped to bytes.
inline Dataset synth_dataset(std::uint64_t seed, std::size_t n_per_class, double separation, std::size_t input_side,
                             const SplitFractions& fractions = {}) {
    if (!(separation >= 0.0)) throw ConfigError("separation must be non-negative");
    if (input_side == 0) throw ConfigError("input side must be positive");
    const std::size_t n_pix = input_side * input_side;

    std::mt19937_64 rng(seed);
    std::vector<float> direction(n_pix);
    std::bernoulli_distribution coin(0.5);
    for (auto& d : direction) d = coin(rng) ? 1.0f : -1.0f;

    Dataset ds;
    ds.id = "synth-" + std::to_string(seed);
    ds.input_side = input_side;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
        Patch p;
        p.side = input_side;
        p.label = static_cast<std::uint8_t>(i % 2);
        p.source_id = ds.id + ":" + std::to_string(i);
        p.pixels.resize(n_pix);
        const double s = p.label == 1 ? 1.0 : -1.0;
        for (std::size_t j = 0; j < n_pix; ++j) {
            const double v = kSynthBaseLevel + kSynthNoiseSigma * (normal(rng) + s * 0.5 * separation * direction[j]);
            p.pixels[j] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
        }
        ds.patches.push_back(std::move(p));
    }
    ds.split = stratified_split(ds.patches, fractions, seed ^ 0x5deece66dULL);
    return ds;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

inline std::string trim(std::string s) {
    const auto ws = " \t\r\n";
    s.erase(0, s.find_first_not_of(ws));
    s.erase(s.find_last_not_of(ws) + 1);
    return s;
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

} // namespace detail

// (v - min) / (max - min) * 255, rounded half up; a constant column maps to 0.
inline std::uint8_t quantize(double v, double lo, double hi) {
    if (!(hi > lo)) return 0;
    const double q = std::floor((v - lo) / (hi - lo) * 255.0 + 0.5);
    return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

// Flow-record CSV to patches. Every non-label column is a numeric feature;
// feature j of a row lands at pixel j (row-major), the rest stays zero.
// Labels "0"/"1" map directly; otherwise a value named benign or normal
// (any case) is class 0, else the lexicographically first value is.
inline Dataset ingest_flows(std::istream& in, const std::string& label_column, const SplitFractions& fractions,
                            std::uint64_t seed, std::size_t input_side = 64, const std::string& id = "csv") {
    std::string line;
    if (!std::getline(in, line)) throw DataError("CSV is empty");
    auto header = detail::split_csv_line(line);
    for (auto& h : header) h = detail::trim(h);
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

    const auto label_it = std::find(header.begin(), header.end(), label_column);
    if (label_it == header.end()) throw DataError("label column '" + label_column + "' not found in header");
    const auto label_idx = static_cast<std::size_t>(label_it - header.begin());
    const std::size_t n_features = header.size() - 1;
    if (n_features > input_side * input_side) {
        throw CapacityError(std::to_string(n_features) + " features do not fit in a " + std::to_string(input_side) +
                            "x" + std::to_string(input_side) + " patch");
    }

    std::vector<std::vector<double>> rows;
    std::vector<std::string> labels;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ParseError("expected " + std::to_string(header.size()) + " cells, got " +
                                 std::to_string(cells.size()),
                             row_no, cells.size());
        }
        std::vector<double> feats;
        feats.reserve(n_features);
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c == label_idx) continue;
            const auto cell = detail::trim(cells[c]);
            double v = 0.0;
            const auto* end = cell.data() + cell.size();
            const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
            if (cell.empty() || ec != std::errc{} || ptr != end || !std::isfinite(v)) {
                throw ParseError("non-numeric feature '" + cell + "' in column '" + header[c] + "'", row_no, c + 1);
            }
            feats.push_back(v);
        }
        rows.push_back(std::move(feats));
        labels.push_back(detail::trim(cells[label_idx]));
    }
    if (rows.empty()) throw DataError("CSV has no data rows");

    std::vector<std::string> distinct = labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() != 2) {
        throw DataError("label column '" + label_column + "' must hold exactly 2 distinct values, found " +
                        std::to_string(distinct.size()));
    }
    std::array<std::string, 2> classes{distinct[0], distinct[1]};
    if (!(classes[0] == "0" && classes[1] == "1")) {
        auto benign = [](const std::string& s) {
            const auto l = detail::lower(s);
            return l == "benign" || l == "normal";
        };
        if (benign(classes[1]) && !benign(classes[0])) std::swap(classes[0], classes[1]);
    }

    Dataset ds;
    ds.id = id;
    ds.input_side = input_side;
    ds.schema.label_column = label_column;
    ds.schema.label_values = classes;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c != label_idx) ds.schema.features.push_back({header[c], 0.0, 0.0});
    }
    for (std::size_t j = 0; j < n_features; ++j) {
        double lo = rows[0][j], hi = rows[0][j];
        for (const auto& r : rows) {
            lo = std::min(lo, r[j]);
            hi = std::max(hi, r[j]);
        }
        ds.schema.features[j].min = lo;
        ds.schema.features[j].max = hi;
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Patch p;
        p.side = input_side;
        p.pixels.assign(input_side * input_side, 0);
        p.label = labels[i] == classes[0] ? 0 : 1;
        p.source_id = id + ":" + std::to_string(i + 2);
        for (std::size_t j = 0; j < n_features; ++j) {
            p.pixels[j] = quantize(rows[i][j], ds.schema.features[j].min, ds.schema.features[j].max);
        }
        ds.patches.push_back(std::move(p));
    }
    ds.split = stratified_split(ds.patches, fractions, seed);
    return ds;
}

inline Dataset ingest_flows(const std::string& csv_path, const std::string& label_column,
                            const SplitFractions& fractions, std::uint64_t seed, std::size_t input_side = 64) {
    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot open CSV '" + csv_path + "'");
    return ingest_flows(in, label_column, fractions, seed, input_side, std::filesystem::path(csv_path).stem().string());
}

// Dataset file: "TLDS" | version u32 | input_side u32 | count u32
//   | per patch: label u8, split u8, side*side pixel bytes | CRC32
inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
    binio::Writer w;
    w.magic("TLDS");
    w.u32(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(d.input_side));
    w.u32(static_cast<std::uint32_t>(d.patches.size()));
    for (std::size_t i = 0; i < d.patches.size(); ++i) {
        w.u8(d.patches[i].label);
        w.u8(static_cast<std::uint8_t>(d.split[i]));
        w.bytes(d.patches[i].pixels);
    }
    return std::move(w).finish();
}

inline Dataset decode_dataset(std::span<const std::uint8_t> bytes, const std::string& id = "dataset") {
    binio::Reader r(bytes);
    r.check_magic("TLDS");
    const auto version_at = r.offset();
    if (const auto v = r.u32(); v != kDatasetVersion) {
        throw FormatError("unsupported dataset version " + std::to_string(v), version_at);
    }
    Dataset d;
    d.id = id;
    d.input_side = r.u32();
    if (d.input_side == 0) throw FormatError("input side is zero", r.offset() - 4);
    const auto n = r.u32();
    const std::size_t n_pix = d.input_side * d.input_side;
    if (r.remaining() != std::size_t(n) * (2 + n_pix)) {
        throw FormatError("patch table length does not match header count", r.offset());
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto at = r.offset();
        Patch p;
        p.side = d.input_side;
        p.label = r.u8();
        const auto tag = r.u8();
        if (p.label > 1 || tag > 2) throw FormatError("bad label or split tag", at);
        const auto px = r.bytes(n_pix);
        p.pixels.assign(px.begin(), px.end());
        p.source_id = id + ":" + std::to_string(i);
        d.patches.push_back(std::move(p));
        d.split.push_back(static_cast<Split>(tag));
    }
    r.expect_end();
    return d;
}

inline void save_dataset(const Dataset& d, const std::string& path) { binio::write_file(path, encode_dataset(d)); }

inline Dataset load_dataset(const std::string& path) {
    return decode_dataset(binio::read_file(path), std::filesystem::path(path).stem().string());
}

} // namespace tlab
