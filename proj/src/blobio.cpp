#include "cugro/blobio.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cugro {

namespace {

void put_le64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

void Manifest::set(const std::string& key, const std::string& value) {
    auto it = index_.find(key);
    if (it != index_.end()) {
        entries_[it->second].second = value;
        return;
    }
    index_[key] = entries_.size();
    entries_.emplace_back(key, value);
}

void Manifest::set_u64(const std::string& key, std::uint64_t value) {
    set(key, std::to_string(value));
}

void Manifest::set_i64(const std::string& key, std::int64_t value) {
    set(key, std::to_string(value));
}

void Manifest::set_f64(const std::string& key, double value) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%a", value);
    set(key, buf);
}

bool Manifest::has(const std::string& key) const {
    return index_.count(key) != 0;
}

const std::string& Manifest::get(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw FormatError("manifest missing key '" + key + "'");
    return entries_[it->second].second;
}

std::uint64_t Manifest::get_u64(const std::string& key) const {
    try {
        return std::stoull(get(key));
    } catch (const std::logic_error&) {
        throw FormatError("manifest key '" + key + "' is not an unsigned integer");
    }
}

std::int64_t Manifest::get_i64(const std::string& key) const {
    try {
        return std::stoll(get(key));
    } catch (const std::logic_error&) {
        throw FormatError("manifest key '" + key + "' is not an integer");
    }
}

double Manifest::get_f64(const std::string& key) const {
    return std::strtod(get(key).c_str(), nullptr);
}

std::string Manifest::serialize(const std::string& magic) const {
    std::string out = magic + "\n";
    for (const auto& [k, v] : entries_) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

Manifest Manifest::parse(const std::string& text, const std::string& magic,
                         const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != magic) {
        throw FormatError(origin + ": bad magic, expected '" + magic + "'");
    }
    Manifest m;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError(origin + ": malformed manifest line " + std::to_string(lineno));
        }
        m.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return m;
}

void BlobWriter::put(double v) {
    put_le64(bytes_, std::bit_cast<std::uint64_t>(v));
}

void BlobWriter::put(std::span<const double> values) {
    bytes_.reserve(bytes_.size() + values.size() * 8);
    for (double v : values) put(v);
}

BlobReader::BlobReader(std::vector<unsigned char> bytes, std::string origin)
    : bytes_(std::move(bytes)), origin_(std::move(origin)) {
    if (bytes_.size() % 8 != 0) {
        throw FormatError(origin_ + ": blob length " + std::to_string(bytes_.size()) +
                          " is not a multiple of 8");
    }
}

double BlobReader::next() {
    if (pos_ + 8 > bytes_.size()) {
        throw FormatError(origin_ + ": blob truncated at byte offset " + std::to_string(pos_));
    }
    const double v = std::bit_cast<double>(get_le64(bytes_.data() + pos_));
    pos_ += 8;
    return v;
}

void BlobReader::next(std::span<double> out) {
    for (double& v : out) v = next();
}

void BlobReader::expect_end() const {
    if (pos_ != bytes_.size()) {
        throw FormatError(origin_ + ": " + std::to_string(bytes_.size() - pos_) +
                          " unexpected trailing bytes");
    }
}

void write_manifest_blob(const std::filesystem::path& path, const std::string& text,
                         const std::vector<unsigned char>& blob) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write("blob:\n", 6);
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

std::pair<std::string, std::vector<unsigned char>> read_manifest_blob(
    const std::filesystem::path& path) {
    std::vector<unsigned char> raw = read_binary_file(path);
    const std::string_view view(reinterpret_cast<const char*>(raw.data()), raw.size());
    // The separator must sit at the start of a line.
    const auto at = view.find("\nblob:\n");
    if (at == std::string_view::npos) {
        throw FormatError(path.string() + ": missing blob separator");
    }
    std::string text(view.substr(0, at + 1));
    std::vector<unsigned char> blob(raw.begin() + static_cast<std::ptrdiff_t>(at + 7), raw.end());
    return {std::move(text), std::move(blob)};
}

void write_checkpoint_pair(const std::filesystem::path& prefix, const std::string& text,
                           const std::vector<unsigned char>& blob) {
    write_text_file(prefix.string() + ".manifest", text);
    std::ofstream out(prefix.string() + ".blob", std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + prefix.string() + ".blob");
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("write failed for " + prefix.string() + ".blob");
}

std::pair<std::string, std::vector<unsigned char>> read_checkpoint_pair(
    const std::filesystem::path& prefix) {
    return {read_text_file(prefix.string() + ".manifest"),
            read_binary_file(prefix.string() + ".blob")};
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<unsigned char> read_binary_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    in.seekg(0, std::ios::end);
    const std::streamsize n = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!in) throw DataError("read failed for " + path.string());
    return bytes;
}

}  // namespace cugro
