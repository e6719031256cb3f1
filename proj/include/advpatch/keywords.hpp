#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "advpatch/oracle.hpp"

namespace advpatch {

// Case-insensitive keyword match on token boundaries. Multi-word keywords
// match as contiguous token phrases; the final token may carry a plural "s"
// ("pedestrians" matches "pedestrian", "guard rails" matches "guard rail").
inline bool matches_keyword(const std::vector<std::string>& tokens, std::string_view keyword) {
  const auto kw = tokenize(keyword);
  if (kw.empty() || kw.size() > tokens.size()) return false;
  for (std::size_t start = 0; start + kw.size() <= tokens.size(); ++start) {
    bool ok = true;
    for (std::size_t j = 0; j < kw.size() && ok; ++j) {
      const std::string& t = tokens[start + j];
      if (t == kw[j]) continue;
      ok = j + 1 == kw.size() && t.size() == kw[j].size() + 1 && t.back() == 's' && t.compare(0, kw[j].size(), kw[j]) == 0;
    }
    if (ok) return true;
  }
  return false;
}

inline bool contains_any_keyword(std::string_view text, const std::vector<std::string>& keywords) {
  const auto tokens = tokenize(text);
  for (const auto& kw : keywords)
    if (matches_keyword(tokens, kw)) return true;
  return false;
}

}  // namespace advpatch
