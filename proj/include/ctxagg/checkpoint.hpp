// Flat binary archive: named double arrays with shapes, preceded by a JSON
// manifest. All integers and scalars are little-endian; round-trips are
// bit-exact.
//
// layout: magic "CTXAGG\0\0" | u32 version | u64 manifest_len | manifest
//         | u64 entry_count | entries
// entry:  u64 name_len | name | u32 ndim | i64 dims[ndim] | f64 data[numel]
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxagg/params.hpp"
#include "ctxagg/tensor.hpp"

namespace ctxagg {

struct ArchiveEntry {
    std::string name;
    Shape shape;
    std::vector<double> data;
};

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
inline void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
inline T read_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw std::runtime_error("archive: truncated file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

inline constexpr char kArchiveMagic[8] = {'C', 'T', 'X', 'A', 'G', 'G', '\0', '\0'};
inline constexpr uint32_t kArchiveVersion = 1;

}  // namespace detail

inline void write_archive(const std::string& path, const std::vector<ArchiveEntry>& entries,
                          const std::string& manifest_json) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("archive: cannot open " + path + " for writing");
    os.write(detail::kArchiveMagic, sizeof(detail::kArchiveMagic));
    detail::write_le<uint32_t>(os, detail::kArchiveVersion);
    detail::write_le<uint64_t>(os, manifest_json.size());
    os.write(manifest_json.data(), static_cast<std::streamsize>(manifest_json.size()));
    detail::write_le<uint64_t>(os, entries.size());
    for (const ArchiveEntry& e : entries) {
        detail::write_le<uint64_t>(os, e.name.size());
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        detail::write_le<uint32_t>(os, static_cast<uint32_t>(e.shape.size()));
        for (int64_t d : e.shape) detail::write_le<int64_t>(os, d);
        if (shape_numel(e.shape) != static_cast<int64_t>(e.data.size()))
            throw std::logic_error("archive: entry " + e.name + " shape/data mismatch");
        for (double v : e.data) detail::write_le<double>(os, v);
    }
    if (!os) throw std::runtime_error("archive: write failed for " + path);
}

struct Archive {
    std::string manifest_json;
    std::vector<ArchiveEntry> entries;

    const ArchiveEntry& at(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return e;
        throw std::out_of_range("archive: no entry named " + name);
    }
};

inline Archive read_archive(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("archive: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::kArchiveMagic, 8) != 0)
        throw std::runtime_error("archive: bad magic in " + path);
    const uint32_t version = detail::read_le<uint32_t>(is);
    if (version != detail::kArchiveVersion)
        throw std::runtime_error("archive: unsupported version " + std::to_string(version));
    Archive a;
    const uint64_t mlen = detail::read_le<uint64_t>(is);
    a.manifest_json.resize(mlen);
    is.read(a.manifest_json.data(), static_cast<std::streamsize>(mlen));
    const uint64_t count = detail::read_le<uint64_t>(is);
    a.entries.resize(count);
    for (uint64_t i = 0; i < count; ++i) {
        ArchiveEntry& e = a.entries[i];
        const uint64_t nlen = detail::read_le<uint64_t>(is);
        e.name.resize(nlen);
        is.read(e.name.data(), static_cast<std::streamsize>(nlen));
        const uint32_t ndim = detail::read_le<uint32_t>(is);
        e.shape.resize(ndim);
        for (uint32_t d = 0; d < ndim; ++d) e.shape[d] = detail::read_le<int64_t>(is);
        const int64_t n = shape_numel(e.shape);
        e.data.resize(static_cast<size_t>(n));
        for (int64_t k = 0; k < n; ++k) e.data[static_cast<size_t>(k)] = detail::read_le<double>(is);
    }
    if (!is) throw std::runtime_error("archive: truncated file " + path);
    return a;
}

// ---- model checkpoints -------------------------------------------------------

struct CheckpointManifest {
    std::string precision = "f64";
    uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();

    std::string to_json() const {
        nlohmann::json j;
        j["precision"] = precision;
        j["seed"] = seed;
        j["config"] = config;
        return j.dump();
    }
    static CheckpointManifest from_json(const std::string& s) {
        nlohmann::json j = nlohmann::json::parse(s);
        CheckpointManifest m;
        m.precision = j.at("precision").get<std::string>();
        m.seed = j.at("seed").get<uint64_t>();
        m.config = j.value("config", nlohmann::json::object());
        return m;
    }
};

inline void save_checkpoint(const std::string& path, const ParamMap& params, const CheckpointManifest& manifest) {
    std::vector<ArchiveEntry> entries;
    entries.reserve(params.size());
    for (const Parameter& p : params) entries.push_back({p.name, p.tensor.shape(), p.tensor.values()});
    write_archive(path, entries, manifest.to_json());
}

// Strict load: every archive entry must match an existing parameter by name
// and shape, and every parameter must be present.
inline CheckpointManifest load_checkpoint(const std::string& path, ParamMap& params) {
    Archive a = read_archive(path);
    if (a.entries.size() != params.size())
        throw std::runtime_error("checkpoint: entry count " + std::to_string(a.entries.size()) +
                                 " does not match parameter count " + std::to_string(params.size()));
    for (const ArchiveEntry& e : a.entries) {
        Parameter& p = params.at(e.name);
        if (p.tensor.shape() != e.shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + e.name + ": " + shape_str(p.tensor.shape()) +
                                     " vs " + shape_str(e.shape));
        p.tensor.values() = e.data;
    }
    return CheckpointManifest::from_json(a.manifest_json);
}

}  // namespace ctxagg
