#include "alcr/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <stdexcept>

namespace alcr::metrics {

int edit_distance(const std::string& a, const std::string& b) {
  int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  std::vector<int> prev(static_cast<std::size_t>(m) + 1), cur(prev.size());
  for (int j = 0; j <= m; ++j) prev[static_cast<std::size_t>(j)] = j;
  for (int i = 1; i <= n; ++i) {
    cur[0] = i;
    for (int j = 1; j <= m; ++j) {
      int sub = prev[static_cast<std::size_t>(j - 1)] + (a[i - 1] != b[j - 1]);
      int del = prev[static_cast<std::size_t>(j)] + 1;
      int ins = cur[static_cast<std::size_t>(j - 1)] + 1;
      cur[static_cast<std::size_t>(j)] = std::min({sub, del, ins});
    }
    std::swap(prev, cur);
  }
  return prev[static_cast<std::size_t>(m)];
}

double cer(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  if (hyps.size() != refs.size())
    throw std::invalid_argument("cer: hypothesis/reference count mismatch");
  std::int64_t edits = 0, ref_len = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    edits += edit_distance(hyps[i], refs[i]);
    ref_len += static_cast<std::int64_t>(refs[i].size());
  }
  if (ref_len == 0) return edits == 0 ? 0.0 : 100.0;
  return 100.0 * static_cast<double>(edits) / static_cast<double>(ref_len);
}

double cer_by_id(const std::map<std::string, std::string>& hyps,
                 const std::map<std::string, std::string>& refs) {
  std::vector<std::string> h, r;
  h.reserve(refs.size());
  r.reserve(refs.size());
  for (const auto& [id, ref] : refs) {
    auto it = hyps.find(id);
    if (it == hyps.end())
      throw std::invalid_argument("cer_by_id: missing hypothesis for " + id);
    h.push_back(it->second);
    r.push_back(ref);
  }
  return cer(h, r);
}

}  // namespace alcr::metrics
