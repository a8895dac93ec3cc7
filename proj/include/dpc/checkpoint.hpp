#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpc {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts unsupported");

/// One named tensor in a DPCNN1 checkpoint: row-major f64 payload.
struct TensorRecord {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> data;

    std::uint64_t element_count() const {
        return std::accumulate(dims.begin(), dims.end(), std::uint64_t{1},
                               [](std::uint64_t a, std::uint64_t b) { return a * b; });
    }
};

inline constexpr char kCheckpointMagic[] = "DPCNN1";

inline void write_checkpoint(const std::string& path, const std::vector<TensorRecord>& tensors) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_checkpoint: cannot open " + path);
    f.write(kCheckpointMagic, 6);
    for (const auto& t : tensors) {
        const std::uint32_t name_len = static_cast<std::uint32_t>(t.name.size());
        const std::uint32_t rank = static_cast<std::uint32_t>(t.dims.size());
        f.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
        f.write(t.name.data(), name_len);
        f.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
        for (std::uint64_t d : t.dims) f.write(reinterpret_cast<const char*>(&d), sizeof(d));
        if (t.data.size() != t.element_count())
            throw std::runtime_error("write_checkpoint: dim/data mismatch for " + t.name);
        f.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("write_checkpoint: write failed for " + path);
}

inline std::vector<TensorRecord> read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_checkpoint: cannot open " + path);
    char magic[6];
    f.read(magic, 6);
    if (!f || std::memcmp(magic, kCheckpointMagic, 6) != 0)
        throw std::runtime_error("read_checkpoint: bad magic in " + path);

    std::vector<TensorRecord> out;
    while (true) {
        std::uint32_t name_len = 0;
        f.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (f.eof()) break;
        if (!f || name_len > 4096) throw std::runtime_error("read_checkpoint: corrupt record");
        TensorRecord t;
        t.name.resize(name_len);
        f.read(t.name.data(), name_len);
        std::uint32_t rank = 0;
        f.read(reinterpret_cast<char*>(&rank), sizeof(rank));
        if (!f || rank > 8) throw std::runtime_error("read_checkpoint: corrupt rank");
        t.dims.resize(rank);
        for (auto& d : t.dims) f.read(reinterpret_cast<char*>(&d), sizeof(d));
        const std::uint64_t count = t.element_count();
        if (!f || count > (1ull << 32)) throw std::runtime_error("read_checkpoint: corrupt dims");
        t.data.resize(count);
        f.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(count * sizeof(double)));
        if (!f) throw std::runtime_error("read_checkpoint: truncated tensor " + t.name);
        out.push_back(std::move(t));
    }
    return out;
}

inline const TensorRecord* find_tensor(const std::vector<TensorRecord>& tensors,
                                       const std::string& name) {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

inline const TensorRecord& require_tensor(const std::vector<TensorRecord>& tensors,
                                          const std::string& name) {
    const TensorRecord* t = find_tensor(tensors, name);
    if (!t) throw std::runtime_error("checkpoint: missing tensor " + name);
    return *t;
}

}  // namespace dpc
