#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mrco {

struct Example {
  std::size_t id = 0;
  std::size_t label = 0;
  std::string text_a;
  std::string text_b;  // empty when the task is single-text
};

struct Dataset {
  std::string name;
  std::vector<Example> examples;
  std::size_t n_classes = 0;
  bool has_pairs = false;

  std::size_t size() const { return examples.size(); }
};

// TSV with header "id\tlabel\ttext_a" or "id\tlabel\ttext_a\ttext_b".
// Errors carry the 1-based line number of the offending row.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& dataset, const std::string& path);

// joining used everywhere a pair task becomes one token stream
std::string join_pair(const std::string& a, const std::string& b);
std::string full_text(const Example& e);

// write-temp-then-rename so readers never observe a partial file
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace mrco
