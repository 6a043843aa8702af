// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "pucknet/tensor.hpp"

namespace pucknet {

// Versioned binary container of named f64 tensors plus one free-form metadata
// string (JSON by convention). Layout, all little-endian:
//   magic "PUCKCKPT" | u32 version | u64 meta_len | meta bytes
//   | u64 tensor_count | per tensor: u64 name_len, name, u64 ndim, u64 dims[],
//     raw f64 values.
// Raw doubles round-trip bitwise.
struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> entries;
    std::string meta;

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : entries)
            if (n == name) return &t;
        return nullptr;
    }
};

namespace detail {

inline constexpr char kCkptMagic[8] = {'P', 'U', 'C', 'K', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCkptVersion = 1;

inline void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail_config("cannot open checkpoint for writing: ", path);
    os.write(detail::kCkptMagic, 8);
    os.write(reinterpret_cast<const char*>(&detail::kCkptVersion), 4);
    detail::write_u64(os, ckpt.meta.size());
    os.write(ckpt.meta.data(), static_cast<std::streamsize>(ckpt.meta.size()));
    detail::write_u64(os, ckpt.entries.size());
    for (const auto& [name, t] : ckpt.entries) {
        detail::write_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u64(os, t.shape().size());
        for (std::size_t d : t.shape()) detail::write_u64(os, d);
        os.write(reinterpret_cast<const char*>(t.values().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) fail_config("short write while saving checkpoint: ", path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail_config("cannot open checkpoint: ", path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
        fail_config("not a checkpoint file: ", path);
    std::uint32_t version = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    if (version != detail::kCkptVersion)
        fail_config("unsupported checkpoint version ", version, " in ", path);
    Checkpoint ckpt;
    ckpt.meta.resize(detail::read_u64(is));
    is.read(ckpt.meta.data(), static_cast<std::streamsize>(ckpt.meta.size()));
    const std::uint64_t count = detail::read_u64(is);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name(detail::read_u64(is), '\0');
        is.read(name.data(), static_cast<std::streamsize>(name.size()));
        Shape shape(detail::read_u64(is));
        for (std::size_t& d : shape) d = detail::read_u64(is);
        std::vector<double> values(numel(shape));
        is.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (!is) fail_config("truncated checkpoint: ", path);
        ckpt.entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    return ckpt;
}

} // namespace pucknet
