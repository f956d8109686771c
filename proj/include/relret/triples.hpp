#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "relret/error.hpp"

namespace relret {

struct Triple {
  std::string subject;
  std::string relation;
  std::string object;
};

/// Knowledge triples indexed by unordered {subject, object} pair.  Relation
/// labels are stored but play no part in lookups: the only question the store
/// answers is whether *any* triple links two words, in either direction.
class TripleStore {
 public:
  void add(Triple t) {
    if (t.subject.empty() || t.object.empty())
      throw ValidationError("triple has empty subject or object");
    pairs_.insert(key(t.subject, t.object));
    triples_.push_back(std::move(t));
  }

  bool related(const std::string& a, const std::string& b) const {
    if (a == b) return false;
    return pairs_.count(key(a, b)) > 0;
  }

  std::size_t size() const { return triples_.size(); }
  const std::vector<Triple>& triples() const { return triples_; }

 private:
  // '\t' cannot occur inside a field (fields come from a tab-separated file),
  // so it is a safe join character.
  static std::string key(const std::string& a, const std::string& b) {
    return a <= b ? a + '\t' + b : b + '\t' + a;
  }

  std::vector<Triple> triples_;
  std::unordered_set<std::string> pairs_;
};

/// Tab-separated `subject<TAB>relation<TAB>object` lines.
inline TripleStore load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open triple file " + path.string());
  TripleStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string::npos ? std::string::npos
                                                   : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos ||
        line.find('\t', t2 + 1) != std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected exactly 3 tab-separated fields");
    Triple t{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1),
             line.substr(t2 + 1)};
    if (t.subject.empty() || t.relation.empty() || t.object.empty())
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": empty field");
    store.add(std::move(t));
  }
  return store;
}

}  // namespace relret
