#pragma once

#include "mapsed/tensor.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mapsed {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Little-endian byte sink for the container formats.
class ByteWriter {
public:
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void i64(std::int64_t v);
    void f64(double v);
    void bytes(const std::string& s);
    /// u32 length followed by the bytes.
    void str(const std::string& s);
    /// u32 rank, u64 dims, f64 data.
    void tensor(const Tensor& t);

    const std::string& buffer() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string data) : data_(std::move(data)) {}

    std::uint32_t u32();
    std::uint64_t u64();
    std::int64_t i64();
    double f64();
    std::string bytes(std::size_t n);
    std::string str();
    Tensor tensor();
    bool at_end() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const;

    std::string data_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
/// Writes through a temporary file in the same directory, then renames.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace mapsed
