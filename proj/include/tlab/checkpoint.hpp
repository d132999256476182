#pragma once

// Checkpoint layout, all integers little-endian:
//   "TLAB" | version u32 | arch tag u8 | input_side u32 | base_width u32
//   | tensor count u32 | per tensor: rank u32, dims u32... | float32 data
//   | CRC32 of all preceding bytes
// Training metadata is not stored.

#include <cstdint>
#include <string>
#include <vector>

#include "binio.hpp"
#include "errors.hpp"
#include "model.hpp"

namespace tlab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> encode_checkpoint(const TrainedModel& model) {
    binio::Writer w;
    w.magic("TLAB");
    w.u32(kCheckpointVersion);
    w.u8(static_cast<std::uint8_t>(model.spec().arch));
    w.u32(static_cast<std::uint32_t>(model.spec().input_side));
    w.u32(static_cast<std::uint32_t>(model.spec().base_width));
    w.u32(static_cast<std::uint32_t>(model.weights().size()));
    for (const auto& t : model.weights()) {
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    }
    for (const auto& t : model.weights()) {
        for (float v : t.values()) w.f32(v);
    }
    return std::move(w).finish();
}

inline TrainedModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
    binio::Reader r(bytes);
    r.check_magic("TLAB");
    const auto version_at = r.offset();
    if (const auto v = r.u32(); v != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(v), version_at);
    }
    const auto tag_at = r.offset();
    const auto tag = r.u8();
    if (tag != static_cast<std::uint8_t>(Arch::qub1) && tag != static_cast<std::uint8_t>(Arch::qub2)) {
        throw FormatError("unknown architecture tag " + std::to_string(tag), tag_at);
    }
    const auto side = r.u32();
    const auto width = r.u32();
    ModelSpec spec;
    try {
        spec = build_spec(static_cast<Arch>(tag), side, width);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid spec block: ") + e.what(), tag_at);
    }

    const auto expected = spec.parameter_shapes();
    const auto count_at = r.offset();
    if (const auto n = r.u32(); n != expected.size()) {
        throw FormatError("tensor count " + std::to_string(n) + " does not match spec (" +
                              std::to_string(expected.size()) + ")",
                          count_at);
    }
    for (const auto& shape : expected) {
        const auto at = r.offset();
        const auto rank = r.u32();
        Shape got;
        if (rank == shape.size()) {
            for (std::uint32_t i = 0; i < rank; ++i) got.push_back(r.u32());
        }
        if (got != shape) throw FormatError("shape table entry does not match spec " + shape_string(shape), at);
    }
    std::vector<Tensor> weights;
    for (const auto& shape : expected) {
        Tensor t(shape);
        if (r.remaining() < t.size() * 4) throw FormatError("truncated weight data", r.offset());
        for (auto& v : t.values()) v = r.f32();
        weights.push_back(std::move(t));
    }
    r.expect_end();
    return TrainedModel(std::move(spec), std::move(weights));
}

inline void save_checkpoint(const TrainedModel& model, const std::string& path) {
    binio::write_file(path, encode_checkpoint(model));
}

inline TrainedModel load_checkpoint(const std::string& path) { return decode_checkpoint(binio::read_file(path)); }

} // namespace tlab
