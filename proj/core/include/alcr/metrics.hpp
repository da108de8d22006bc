#pragma once

#include <map>
#include <string>
#include <vector>

namespace alcr::metrics {

/// Levenshtein distance with unit insert/delete/substitute costs.
int edit_distance(const std::string& a, const std::string& b);

/// Micro-averaged character error rate in percent:
/// 100 * sum(edit_distance) / sum(reference length).
double cer(const std::vector<std::string>& hyps, const std::vector<std::string>& refs);

/// CER over utterances keyed by id; every reference id must have a hypothesis.
double cer_by_id(const std::map<std::string, std::string>& hyps,
                 const std::map<std::string, std::string>& refs);

}  // namespace alcr::metrics
