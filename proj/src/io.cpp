#include "mapsed/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mapsed {

static_assert(std::endian::native == std::endian::little, "container formats assume a little-endian host");

void ByteWriter::u32(std::uint32_t v) { buf_.append(reinterpret_cast<const char*>(&v), sizeof v); }
void ByteWriter::u64(std::uint64_t v) { buf_.append(reinterpret_cast<const char*>(&v), sizeof v); }
void ByteWriter::i64(std::int64_t v) { buf_.append(reinterpret_cast<const char*>(&v), sizeof v); }
void ByteWriter::f64(double v) { buf_.append(reinterpret_cast<const char*>(&v), sizeof v); }
void ByteWriter::bytes(const std::string& s) { buf_.append(s); }

void ByteWriter::str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
}

void ByteWriter::tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u64(d);
    buf_.append(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(double));
}

void ByteReader::need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("truncated container: needed " + std::to_string(n) + " more bytes");
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, data_.data() + pos_, 4);
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, data_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

std::int64_t ByteReader::i64() {
    need(8);
    std::int64_t v;
    std::memcpy(&v, data_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

double ByteReader::f64() {
    need(8);
    double v;
    std::memcpy(&v, data_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

std::string ByteReader::bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
}

std::string ByteReader::str() { return bytes(u32()); }

Tensor ByteReader::tensor() {
    const std::uint32_t rank = u32();
    if (rank > 8) throw FormatError("tensor rank " + std::to_string(rank) + " is implausible");
    Shape shape(rank);
    for (auto& d : shape) d = u64();
    const std::size_t n = shape_numel(shape);
    need(n * sizeof(double));
    std::vector<double> data(n);
    std::memcpy(data.data(), data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return Tensor(std::move(shape), std::move(data));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write '" + tmp.string() + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw FormatError("short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, target);
}

}  // namespace mapsed
