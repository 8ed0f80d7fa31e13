#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "tsi/errors.hpp"
#include "tsi/tensor.hpp"

// Versioned container of named parameter arrays. Byte layout: magic "TSI1",
// then per record: u64 name length, UTF-8 name, u64 rank, u64 dims, f64
// payload, all little-endian. Record order is preserved, so save -> load ->
// save is byte-identical.
namespace tsi {

class Checkpoint {
public:
    std::vector<std::pair<std::string, Tensor>> entries;

    void add(std::string name, Tensor value) { entries.emplace_back(std::move(name), std::move(value)); }

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : entries)
            if (n == name) return &t;
        return nullptr;
    }

    const Tensor& require(const std::string& name) const {
        const Tensor* t = find(name);
        if (!t) throw DataError("checkpoint: missing entry '" + name + "'");
        return *t;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("checkpoint: cannot open " + path + " for writing");
        out.write("TSI1", 4);
        for (const auto& [name, tensor] : entries) {
            write_u64(out, name.size());
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_u64(out, static_cast<uint64_t>(tensor.rank()));
            for (int64_t d : tensor.dims) write_u64(out, static_cast<uint64_t>(d));
            out.write(reinterpret_cast<const char*>(tensor.data.data()),
                      static_cast<std::streamsize>(tensor.data.size() * sizeof(double)));
        }
        if (!out) throw DataError("checkpoint: write to " + path + " failed");
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("checkpoint: cannot open " + path);
        char magic[4];
        if (!in.read(magic, 4) || std::memcmp(magic, "TSI1", 4) != 0)
            throw DataError("checkpoint: " + path + " is not a TSI1 file");
        Checkpoint cp;
        while (true) {
            uint64_t name_len = 0;
            if (!read_u64(in, name_len)) break;  // clean EOF
            std::string name(name_len, '\0');
            if (!in.read(name.data(), static_cast<std::streamsize>(name_len)))
                throw DataError("checkpoint: truncated name in " + path);
            uint64_t rank = 0;
            if (!read_u64(in, rank)) throw DataError("checkpoint: truncated rank in " + path);
            std::vector<int64_t> dims;
            uint64_t total = 1;
            for (uint64_t i = 0; i < rank; ++i) {
                uint64_t d = 0;
                if (!read_u64(in, d)) throw DataError("checkpoint: truncated dims in " + path);
                dims.push_back(static_cast<int64_t>(d));
                total *= d;
            }
            std::vector<double> data(total);
            if (!in.read(reinterpret_cast<char*>(data.data()),
                         static_cast<std::streamsize>(total * sizeof(double))))
                throw DataError("checkpoint: truncated payload for '" + name + "' in " + path);
            cp.add(std::move(name), Tensor(std::move(dims), std::move(data)));
        }
        return cp;
    }

private:
    static void write_u64(std::ofstream& out, uint64_t v) {
        char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        out.write(buf, 8);
    }

    static bool read_u64(std::ifstream& in, uint64_t& v) {
        char buf[8];
        if (!in.read(buf, 8)) return false;
        v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
        return true;
    }
};

}  // namespace tsi
