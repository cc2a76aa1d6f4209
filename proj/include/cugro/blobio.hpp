#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cugro/error.hpp"
#include "cugro/tensor.hpp"

namespace cugro {

/// Ordered key=value text manifest. Keys are unique; insertion order is
/// preserved so manifests serialize reproducibly.
class Manifest {
public:
    void set(const std::string& key, const std::string& value);
    void set_u64(const std::string& key, std::uint64_t value);
    void set_i64(const std::string& key, std::int64_t value);
    /// Doubles are stored as hexfloats so round-trips are bit-exact.
    void set_f64(const std::string& key, double value);

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::int64_t get_i64(const std::string& key) const;
    double get_f64(const std::string& key) const;

    std::string serialize(const std::string& magic) const;
    /// Parses `text`, checking the first line against `magic`.
    static Manifest parse(const std::string& text, const std::string& magic,
                          const std::string& origin);

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
    std::map<std::string, std::size_t> index_;
};

/// Little-endian IEEE-754 blob writer; every model/dataset payload is a
/// flat stream of 64-bit floats in manifest order.
class BlobWriter {
public:
    void put(double v);
    void put(std::span<const double> values);
    void put(const Tensor& t) { put(std::span<const double>(t.data)); }
    std::size_t count() const { return bytes_.size() / 8; }
    const std::vector<unsigned char>& bytes() const { return bytes_; }

private:
    std::vector<unsigned char> bytes_;
};

class BlobReader {
public:
    BlobReader(std::vector<unsigned char> bytes, std::string origin);

    double next();
    void next(std::span<double> out);
    void next(Tensor& t) { next(std::span<double>(t.data)); }
    std::size_t remaining() const { return (bytes_.size() - pos_) / 8; }
    /// Errors unless the whole blob was consumed.
    void expect_end() const;

private:
    std::vector<unsigned char> bytes_;
    std::size_t pos_ = 0;
    std::string origin_;
};

/// Single-file container: manifest text, a "blob:" separator line, then the
/// raw blob bytes. Datasets use this layout.
void write_manifest_blob(const std::filesystem::path& path, const std::string& text,
                         const std::vector<unsigned char>& blob);
std::pair<std::string, std::vector<unsigned char>> read_manifest_blob(
    const std::filesystem::path& path);

/// Two-file layout used by model checkpoints: `<prefix>.manifest` holds the
/// text, `<prefix>.blob` the parameters.
void write_checkpoint_pair(const std::filesystem::path& prefix, const std::string& text,
                           const std::vector<unsigned char>& blob);
std::pair<std::string, std::vector<unsigned char>> read_checkpoint_pair(
    const std::filesystem::path& prefix);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
std::vector<unsigned char> read_binary_file(const std::filesystem::path& path);

}  // namespace cugro
