#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mestlab::io {

/// Parsed form of a call-like option string such as "huber(k=1.345, 0.1)".
/// Positional arguments have an empty key.
struct CallSpec {
  std::string name;
  std::vector<std::pair<std::string, std::string>> args;

  /// Value of a named argument, or of the positional argument at `position`.
  std::optional<std::string> get(std::string_view key, std::size_t position) const;
  double get_double(std::string_view key, std::size_t position, double fallback) const;
  /// Throws ParseError if an argument name is not in `allowed`.
  void require_keys(std::initializer_list<std::string_view> allowed) const;
};

CallSpec parse_call(std::string_view text);

double parse_double(std::string_view text);
long long parse_int(std::string_view text);
std::uint64_t parse_uint(std::string_view text);
bool parse_bool(std::string_view text);
std::vector<double> parse_double_list(std::string_view text);
std::vector<long long> parse_int_list(std::string_view text);

std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);

/// Shortest-round-trip-safe decimal: 17 significant digits.
std::string format_double(double value);

/// Headerless, comma-separated, row-major matrix file. Throws IoError when
/// the file cannot be opened (message names the path) and ParseError on
/// ragged rows or non-numeric fields.
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);
/// A response file may be a single column or a single row.
Eigen::VectorXd read_vector_csv(const std::filesystem::path& path);
void write_vector_csv(const std::filesystem::path& path, const Eigen::VectorXd& v);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view content);

/// Plain-text key/value configuration:
///   # comment
///   key = value
/// Keys are unique; whitespace around keys and values is trimmed.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  /// Keys never read through get/require; used to reject typos.
  std::vector<std::string> unused_keys() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
  mutable std::map<std::string, bool> touched_;
};

/// Git blob hash (SHA-1 of "blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(std::string_view content);

}  // namespace mestlab::io
