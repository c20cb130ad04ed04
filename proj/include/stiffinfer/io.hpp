#pragma once

// Run artifacts: RFC-4180 CSV, SHA-256 file digests and the run manifest.
// Needs OpenSSL (libcrypto) and nlohmann/json; link stiffinfer::io.

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stiffinfer/errors.hpp"

#ifndef STIFFINFER_VERSION
#define STIFFINFER_VERSION "0.0.0"
#endif

namespace stiffinfer {

inline constexpr const char* version() { return STIFFINFER_VERSION; }

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double x) {
  char buf[32];
  for (int p = 1; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

class CsvWriter {
public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : path_(path), out_(path) {
    if (!out_) throw ValidationError("cannot open '" + path.string() + "' for writing");
    width_ = header.size();
    write(header);
  }

  void write(const std::vector<std::string>& fields) {
    if (fields.size() != width_) throw ValidationError("CSV row width differs from the header in " + path_.string());
    for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << csv_escape(fields[i]);
    out_ << "\r\n";
  }

  void write(const std::vector<double>& values) {
    std::vector<std::string> f;
    f.reserve(values.size());
    for (double v : values) f.push_back(format_double(v));
    write(f);
  }

  void close() {
    out_.close();
    if (!out_) throw ValidationError("failed writing '" + path_.string() + "'");
  }

private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t width_ = 0;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }

  std::vector<double> numeric_column(std::size_t c) const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::string& s = rows[r][c];
      std::size_t used = 0;
      double x;
      try {
        x = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != s.size() || s.empty())
        throw ParseError("'" + s + "' is not a number", static_cast<int>(r) + 2, header[c]);
      v.push_back(x);
    }
    return v;
  }
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  int line = 1;
  auto end_row = [&] {
    row.push_back(field);
    field.clear();
    if (t.header.empty()) t.header = row;
    else if (row.size() != t.header.size())
      throw ParseError("row has " + std::to_string(row.size()) + " fields, header has " +
                       std::to_string(t.header.size()), line);
    else t.rows.push_back(row);
    row.clear();
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') field += '"', ++i;
      else if (c == '"') quoted = false;
      else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty()) quoted = any = true;
    else if (c == ',') row.push_back(field), field.clear(), any = true;
    else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') continue;
    else if (c == '\n' || c == '\r') {
      if (any || !field.empty()) end_row();
      ++line;
    } else field += c, any = true;
  }
  if (quoted) throw ParseError("unterminated quoted field", line);
  if (any || !field.empty()) end_row();
  if (t.header.empty()) throw ParseError("empty CSV document", 1);
  return t;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  try {
    return parse_csv(read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line(), e.field());
  }
}

// ---------------------------------------------------------------------------
// Digests and JSON

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("SHA-256 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

inline std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

inline nlohmann::json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline nlohmann::json to_json(const Eigen::MatrixXd& M) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) rows.push_back(to_json(Eigen::VectorXd(M.row(i).transpose())));
  return rows;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Record of one CLI run: what was asked, with which configuration and
/// seeds, and a digest of every file written.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::string tool_version = version();
  std::string started = utc_timestamp();
  std::string finished;
  struct Output {
    std::string path; ///< relative to the run directory
    std::string sha256;
    std::uintmax_t bytes = 0;
  };
  std::vector<Output> outputs;

  void add_output(const std::filesystem::path& dir, const std::string& name) {
    const auto p = dir / name;
    outputs.push_back({name, sha256_file(p), std::filesystem::file_size(p)});
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["arguments"] = arguments;
    j["config"] = config;
    j["seeds"] = seeds;
    j["tool_version"] = tool_version;
    j["started"] = started;
    j["finished"] = finished;
    j["outputs"] = nlohmann::json::array();
    for (const auto& o : outputs) j["outputs"].push_back({{"path", o.path}, {"sha256", o.sha256}, {"bytes", o.bytes}});
    return j;
  }

  /// Stamps the finish time and writes manifest.json into dir.
  void write(const std::filesystem::path& dir) {
    finished = utc_timestamp();
    write_json(dir / "manifest.json", to_json());
  }
};

} // namespace stiffinfer
