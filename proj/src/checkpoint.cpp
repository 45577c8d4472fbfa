#include "fpa/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fpa {

namespace {

void put_u16(std::ostream& out, uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    out.write(b, 2);
}

void put_u32(std::ostream& out, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

uint16_t get_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write("FPA1", 4);
    put_u32(out, static_cast<uint32_t>(data.config_json.size()));
    out.write(data.config_json.data(), static_cast<std::streamsize>(data.config_json.size()));
    for (const auto& [name, t] : data.tensors) {
        if (name.size() > 0xffff) throw std::invalid_argument("tensor name too long: " + name);
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        out.put(0);  // dtype f32
        out.put(static_cast<char>(t.ndim()));
        for (int d : t.shape()) put_u32(out, static_cast<uint32_t>(d));
        static_assert(sizeof(float) == 4);
        out.write(reinterpret_cast<const char*>(t.data().data()),
                  static_cast<std::streamsize>(t.numel() * 4));
    }
    if (!out) throw std::runtime_error("write failure for checkpoint " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FPA1", 4) != 0)
        throw std::runtime_error("not an FPA1 checkpoint: " + path);
    uint32_t clen = get_u32(in);
    CheckpointData data;
    data.config_json.resize(clen);
    in.read(data.config_json.data(), clen);
    if (!in) throw std::runtime_error("truncated checkpoint config in " + path);
    while (true) {
        int first = in.peek();
        if (first == EOF) break;
        uint16_t nlen = get_u16(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        int dtype = in.get();
        if (dtype != 0) throw std::runtime_error("unsupported dtype tag in checkpoint " + path);
        int ndim = in.get();
        if (ndim < 1 || ndim > 8) throw std::runtime_error("bad tensor rank in checkpoint " + path);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(get_u32(in));
        Tensor<float> t(shape);
        in.read(reinterpret_cast<char*>(t.mutable_data().data()),
                static_cast<std::streamsize>(t.numel() * 4));
        if (!in) throw std::runtime_error("truncated tensor record in checkpoint " + path);
        data.tensors.emplace_back(std::move(name), std::move(t));
    }
    return data;
}

}  // namespace fpa
