#include "mrco/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mrco/encoder.hpp"

namespace mrco {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::size_t parse_index(const std::string& field, const char* what,
                        std::size_t line_no) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(field, &pos);
    if (pos != field.size() || v < 0) throw std::invalid_argument(field);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad " +
                             what + " '" + field + "'");
  }
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty file, expected a header");
  line = strip_cr(line);

  bool pairs;
  if (line == "id\tlabel\ttext_a")
    pairs = false;
  else if (line == "id\tlabel\ttext_a\ttext_b")
    pairs = true;
  else
    throw std::runtime_error(path + ": unrecognized header '" + line + "'");

  Dataset ds;
  ds.name = path;
  ds.has_pairs = pairs;
  std::set<std::size_t> seen_ids;
  std::size_t line_no = 1;
  std::size_t expected = pairs ? 4u : 3u;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> cols = split_tabs(line);
    if (cols.size() != expected)
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(expected) + " columns, got " +
                               std::to_string(cols.size()));
    Example e;
    e.id = parse_index(cols[0], "id", line_no);
    e.label = parse_index(cols[1], "label", line_no);
    e.text_a = cols[2];
    if (pairs) e.text_b = cols[3];
    if (!seen_ids.insert(e.id).second)
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": duplicate id " + std::to_string(e.id));
    if (e.label + 1 > ds.n_classes) ds.n_classes = e.label + 1;
    ds.examples.push_back(std::move(e));
  }
  if (ds.n_classes < 2)
    throw std::runtime_error(path + ": need at least 2 classes, found " +
                             std::to_string(ds.n_classes));
  return ds;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ostringstream out;
  out << (dataset.has_pairs ? "id\tlabel\ttext_a\ttext_b" : "id\tlabel\ttext_a")
      << '\n';
  for (const Example& e : dataset.examples) {
    out << e.id << '\t' << e.label << '\t' << e.text_a;
    if (dataset.has_pairs) out << '\t' << e.text_b;
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

std::string join_pair(const std::string& a, const std::string& b) {
  return a + " <sep> " + b;
}

std::string full_text(const Example& e) {
  return e.text_b.empty() ? e.text_a : join_pair(e.text_a, e.text_b);
}

void write_file_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write: " + tmp);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("rename failed: " + tmp + " -> " + path);
}

}  // namespace mrco
