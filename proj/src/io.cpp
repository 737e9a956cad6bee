#include "mestlab/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "mestlab/errors.hpp"

namespace mestlab::io {

std::string trim(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(text.substr(start)));
      return out;
    }
    out.push_back(trim(text.substr(start, pos - start)));
    start = pos + 1;
  }
}

double parse_double(std::string_view text) {
  const std::string t = trim(text);
  double value = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (!t.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (t.empty() || ec != std::errc() || ptr != last) {
    throw ParseError("not a number: '" + t + "'");
  }
  return value;
}

long long parse_int(std::string_view text) {
  const std::string t = trim(text);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ParseError("not an integer: '" + t + "'");
  }
  return value;
}

std::uint64_t parse_uint(std::string_view text) {
  const std::string t = trim(text);
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ParseError("not a non-negative integer: '" + t + "'");
  }
  return value;
}

bool parse_bool(std::string_view text) {
  std::string t = trim(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ParseError("not a boolean: '" + t + "'");
}

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> out;
  std::string t = trim(text);
  if (!t.empty() && (t.front() == '[' || t.front() == '{')) t = t.substr(1);
  if (!t.empty() && (t.back() == ']' || t.back() == '}')) t.pop_back();
  for (const auto& item : split(t, ',')) {
    if (!item.empty()) out.push_back(parse_double(item));
  }
  return out;
}

std::vector<long long> parse_int_list(std::string_view text) {
  std::vector<long long> out;
  std::string t = trim(text);
  if (!t.empty() && (t.front() == '[' || t.front() == '{')) t = t.substr(1);
  if (!t.empty() && (t.back() == ']' || t.back() == '}')) t.pop_back();
  for (const auto& item : split(t, ',')) {
    if (item.empty()) continue;
    const auto dots = item.find("..");
    if (dots != std::string::npos) {
      const long long lo = parse_int(item.substr(0, dots));
      const long long hi = parse_int(item.substr(dots + 2));
      if (hi < lo) throw ParseError("empty range '" + item + "'");
      for (long long v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      out.push_back(parse_int(item));
    }
  }
  return out;
}

std::optional<std::string> CallSpec::get(std::string_view key, std::size_t position) const {
  for (const auto& [k, v] : args) {
    if (k == key) return v;
  }
  std::size_t index = 0;
  for (const auto& [k, v] : args) {
    if (!k.empty()) continue;
    if (index == position) return v;
    ++index;
  }
  return std::nullopt;
}

double CallSpec::get_double(std::string_view key, std::size_t position, double fallback) const {
  const auto v = get(key, position);
  return v ? parse_double(*v) : fallback;
}

void CallSpec::require_keys(std::initializer_list<std::string_view> allowed) const {
  for (const auto& [k, v] : args) {
    if (k.empty()) continue;
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ParseError("unknown argument '" + k + "' for '" + name + "'");
    }
  }
}

namespace {

// Splits on commas that are not nested inside parentheses or brackets.
std::vector<std::string> split_top_level(std::string_view text) {
  std::vector<std::string> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '(' || text[i] == '[') ++depth;
    if (text[i] == ')' || text[i] == ']') --depth;
    if (text[i] == ',' && depth == 0) {
      out.push_back(trim(text.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.push_back(trim(text.substr(start)));
  return out;
}

}  // namespace

CallSpec parse_call(std::string_view text) {
  CallSpec spec;
  const std::string t = trim(text);
  const auto open = t.find('(');
  if (open == std::string::npos) {
    spec.name = t;
  } else {
    if (t.back() != ')') throw ParseError("missing ')' in '" + t + "'");
    spec.name = trim(std::string_view(t).substr(0, open));
    const std::string inner = t.substr(open + 1, t.size() - open - 2);
    if (!trim(inner).empty()) {
      for (const auto& item : split_top_level(inner)) {
        if (item.empty()) throw ParseError("empty argument in '" + t + "'");
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq > item.find_first_of("([")) {
          spec.args.emplace_back("", item);
        } else {
          spec.args.emplace_back(trim(std::string_view(item).substr(0, eq)),
                                 trim(std::string_view(item).substr(eq + 1)));
        }
      }
    }
  }
  std::transform(spec.name.begin(), spec.name.end(), spec.name.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  std::replace(spec.name.begin(), spec.name.end(), '-', '_');
  if (spec.name.empty()) throw ParseError("empty specification '" + t + "'");
  return spec;
}

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  std::vector<std::vector<double>> rows;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    try {
      for (const auto& field : split(line, ',')) row.push_back(parse_double(field));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(rows.front().size()) + " fields, got " +
                       std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path.string() + ": no data");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::string out;
  out.reserve(static_cast<std::size_t>(m.size()) * 24);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  write_text(path, out);
}

Eigen::VectorXd read_vector_csv(const std::filesystem::path& path) {
  const Eigen::MatrixXd m = read_matrix_csv(path);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  throw ParseError(path.string() + ": expected a single row or column");
}

void write_vector_csv(const std::filesystem::path& path, const Eigen::VectorXd& v) {
  write_matrix_csv(path, Eigen::MatrixXd(v));
}

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::istringstream lines{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ParseError("config line " + std::to_string(line_no) + ": empty key");
    if (cfg.entries_.count(key)) {
      throw ParseError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    cfg.entries_[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  return parse(read_text(path));
}

bool KeyValueConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  touched_[key] = true;
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

std::string KeyValueConfig::require(const std::string& key) const {
  touched_[key] = true;
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ParseError("missing config key '" + key + "'");
  return it->second;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (!touched_.count(k)) out.push_back(k);
  }
  return out;
}

std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

}  // namespace mestlab::io
