#include "slmfit/io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "slmfit/error.hpp"

namespace slmfit::io {

namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  std::string out = s.substr(a, b - a);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

[[noreturn]] void parse_error(const std::string& source, std::size_t line, std::size_t col, const std::string& what) {
  std::ostringstream msg;
  msg << source << ":" << line << ":" << col << ": " << what;
  throw InvalidInput(msg.str());
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

struct Cell {
  std::string text;
  std::size_t col;  // 1-based character position
};

std::vector<Cell> split_csv(const std::string& line) {
  std::vector<Cell> cells;
  std::size_t start = 0;
  bool quoted = false;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i < line.size() && line[i] == '"') quoted = !quoted;
    if (i == line.size() || (line[i] == ',' && !quoted)) {
      cells.push_back({trim(line.substr(start, i - start)), start + 1});
      start = i + 1;
    }
  }
  return cells;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

}  // namespace

std::size_t Table::column(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return j;
  throw InvalidInput("column '" + name + "' not found");
}

Table parse_table(const std::string& text, const std::string& source) {
  const auto lines = lines_of(text);
  Table t;
  std::size_t header_line = 0;
  while (header_line < lines.size() && trim(lines[header_line]).empty()) ++header_line;
  if (header_line == lines.size()) parse_error(source, 1, 1, "empty table");
  for (const auto& c : split_csv(lines[header_line])) {
    if (c.text.empty()) parse_error(source, header_line + 1, c.col, "empty column name");
    t.names.push_back(c.text);
  }
  t.columns.assign(t.names.size(), {});
  for (std::size_t l = header_line + 1; l < lines.size(); ++l) {
    if (trim(lines[l]).empty()) continue;
    const auto cells = split_csv(lines[l]);
    if (cells.size() != t.names.size()) {
      std::ostringstream msg;
      msg << "expected " << t.names.size() << " fields, found " << cells.size();
      parse_error(source, l + 1, 1, msg.str());
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      double v;
      if (cells[j].text == kMissingToken) v = std::nan("");
      else if (!parse_number(cells[j].text, v) || !std::isfinite(v))
        parse_error(source, l + 1, cells[j].col, "'" + cells[j].text + "' is not a number or NA");
      t.columns[j].push_back(v);
    }
  }
  return t;
}

Table read_table(const std::string& path) { return parse_table(slurp(path), path); }

WeightsMatrix parse_weights(const std::string& text, const std::string& source) {
  const auto lines = lines_of(text);
  std::size_t l = 0;
  auto next_content = [&]() {
    while (l < lines.size()) {
      const std::string s = trim(lines[l]);
      if (!s.empty() && s[0] != '#') return true;
      ++l;
    }
    return false;
  };
  if (!next_content()) parse_error(source, 1, 1, "missing header 'n nnz standardized'");
  long long n = 0, nnz = 0;
  int standardized = 0;
  {
    std::istringstream hs(lines[l]);
    if (!(hs >> n >> nnz >> standardized) || n <= 0 || nnz < 0 || (standardized != 0 && standardized != 1))
      parse_error(source, l + 1, 1, "header must be 'n nnz standardized' with standardized 0 or 1");
    ++l;
  }
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(nnz));
  while (static_cast<long long>(entries.size()) < nnz) {
    if (!next_content()) {
      std::ostringstream msg;
      msg << "expected " << nnz << " entries, found " << entries.size();
      parse_error(source, l + 1, 1, msg.str());
    }
    std::istringstream es(lines[l]);
    long long i, j;
    std::string vtext;
    if (!(es >> i >> j >> vtext)) parse_error(source, l + 1, 1, "entry must be 'i j value'");
    double v;
    if (!parse_number(vtext, v)) parse_error(source, l + 1, 1, "'" + vtext + "' is not a number");
    if (i < 0 || j < 0 || i >= n || j >= n) {
      std::ostringstream msg;
      msg << "index (" << i << ", " << j << ") outside a " << n << " x " << n << " matrix";
      parse_error(source, l + 1, 1, msg.str());
    }
    entries.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), v);
    ++l;
  }
  if (next_content()) parse_error(source, l + 1, 1, "unexpected content after the last entry");
  return make_weights(sparse_from_triplets(n, n, entries), standardized == 1);
}

WeightsMatrix read_weights(const std::string& path) { return parse_weights(slurp(path), path); }

std::string format_weights(const WeightsMatrix& w) {
  std::ostringstream out;
  out << w.n() << " " << w.mat.nonZeros() << " " << (w.standardized ? 1 : 0) << "\n";
  SparseMat rm = w.mat;
  for (Eigen::Index c = 0; c < rm.outerSize(); ++c)
    for (SparseMat::InnerIterator it(rm, c); it; ++it)
      out << it.row() << " " << it.col() << " " << format_double(it.value()) << "\n";
  return out.str();
}

std::vector<Point2> read_points(const std::string& path) {
  const Table t = read_table(path);
  const std::size_t xc = t.column("x"), yc = t.column("y");
  std::vector<Point2> out(t.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {t.columns[xc][i], t.columns[yc][i]};
    if (!std::isfinite(out[i].x) || !std::isfinite(out[i].y)) {
      std::ostringstream msg;
      msg << path << ": point " << i << " has missing coordinates";
      throw InvalidInput(msg.str());
    }
  }
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return kMissingToken;
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string marginal_csv(const Marginal& m, const std::string& x_name) {
  std::string out = x_name + ",density\n";
  for (std::size_t i = 0; i < m.support().size(); ++i)
    out += format_double(m.support()[i]) + "," + format_double(m.density()[i]) + "\n";
  return out;
}

void OutputSet::add(const std::string& relative_path, std::string content) {
  files_[relative_path] = std::move(content);
}

void OutputSet::commit(const std::string& dir) const {
  std::vector<fs::path> written;
  try {
    for (const auto& [rel, content] : files_) {
      const fs::path p = fs::path(dir) / rel;
      fs::create_directories(p.parent_path());
      std::ofstream out(p, std::ios::binary | std::ios::trunc);
      if (!out) throw InvalidInput("cannot write '" + p.string() + "'");
      written.push_back(p);
      out << content;
      out.close();
      if (!out) throw InvalidInput("error writing '" + p.string() + "'");
    }
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    throw;
  }
}

}  // namespace slmfit::io
