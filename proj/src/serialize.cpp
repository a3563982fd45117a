#include "tinyvlm/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace tinyvlm {

namespace {

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("tensor container: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("tensor container: truncated header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t, DType dtype) {
    const Shape& s = t.shape();
    write_u64(os, static_cast<std::uint64_t>(s.size()));
    for (auto e : s) write_u64(os, static_cast<std::uint64_t>(e));
    write_u32(os, static_cast<std::uint32_t>(dtype));
    if (dtype == DType::f64) {
        static_assert(sizeof(double) == 8);
        os.write(reinterpret_cast<const char*>(t.data().data()),
                 static_cast<std::streamsize>(t.data().size() * sizeof(double)));
    } else {
        std::vector<float> buf(t.data().begin(), t.data().end());
        os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("tensor container: write failed");
}

Tensor read_tensor(std::istream& is) {
    const std::uint64_t rank = read_u64(is);
    if (rank > 8) throw std::runtime_error("tensor container: implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::int64_t>(read_u64(is));
    const auto dtype = static_cast<DType>(read_u32(is));
    const std::int64_t n = shape_numel(shape);
    std::vector<double> data(static_cast<std::size_t>(n));
    if (dtype == DType::f64) {
        is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    } else if (dtype == DType::f32) {
        std::vector<float> buf(static_cast<std::size_t>(n));
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
        for (std::size_t i = 0; i < buf.size(); ++i) data[i] = static_cast<double>(buf[i]);
    } else {
        throw std::runtime_error("tensor container: unknown dtype tag");
    }
    if (!is) throw std::runtime_error("tensor container: truncated payload");
    return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t, DType dtype) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_tensor(os, t, dtype);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_tensor(is);
}

}  // namespace tinyvlm
