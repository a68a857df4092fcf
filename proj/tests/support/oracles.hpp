#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pilot/embed.hpp"

namespace pilot::testing {

struct OracleDistances {
  std::vector<double> d_sum;
  std::vector<double> d_mean;
};

// Exhaustive reference: every distance, full sort by (distance, id), first k.
inline OracleDistances brute_force_distances(const embed::EmbeddingMatrix& emb,
                                             const std::vector<std::string>& positives,
                                             const std::vector<std::string>& unlabeled, std::size_t k) {
  OracleDistances out;
  for (const auto& u : unlabeled) {
    const auto x = emb.row(u);
    std::vector<std::pair<double, std::string>> all;
    for (const auto& p : positives) {
      const auto y = emb.row(p);
      double d = 0.0;
      for (std::size_t m = 0; m < x.size(); ++m) d += std::fabs(static_cast<double>(x[m]) - static_cast<double>(y[m]));
      all.emplace_back(d, p);
    }
    std::sort(all.begin(), all.end());
    double sum = 0.0;
    std::vector<double> mean(x.size(), 0.0);
    for (std::size_t t = 0; t < k; ++t) {
      sum += all[t].first;
      const auto y = emb.row(all[t].second);
      for (std::size_t m = 0; m < x.size(); ++m) mean[m] += static_cast<double>(y[m]);
    }
    for (auto& v : mean) v /= static_cast<double>(k);
    double dm = 0.0;
    for (std::size_t m = 0; m < x.size(); ++m) dm += std::fabs(static_cast<double>(x[m]) - mean[m]);
    out.d_sum.push_back(sum);
    out.d_mean.push_back(dm);
  }
  return out;
}

}  // namespace pilot::testing
