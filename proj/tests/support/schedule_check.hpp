#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "nl2lf/schedule.hpp"

namespace nl2lf::testing {

struct ScheduleAudit {
  std::int64_t gold_batches = 0;
  std::int64_t noisy_batches = 0;
  std::int64_t full_cycles = 0;
  std::int64_t full_gold_epochs = 0;
  // First violation found, empty when the schedule is clean.
  std::string problem;
};

// Draws `n_batches` from a fresh plan and checks, independently of the
// scheduler's own bookkeeping: tag counts inside every full cycle equal the
// ratio; each full gold (and noisy) epoch is exactly the id multiset {0..N-1}.
inline ScheduleAudit audit_schedule(training::InterleaveRatio ratio, std::int64_t n_batches, std::int64_t gold_size,
                                    std::int64_t noisy_size, std::size_t batch_size, std::uint64_t seed) {
  using training::BatchSource;
  auto ids = [](std::int64_t n) {
    std::vector<std::int64_t> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 0);
    return v;
  };
  std::optional<training::EpochSampler> noisy;
  if (noisy_size > 0) noisy.emplace(ids(noisy_size), batch_size, seed + 1);
  auto plan = training::interleave(training::EpochSampler(ids(gold_size), batch_size, seed), std::move(noisy), ratio);

  ScheduleAudit audit;
  std::vector<BatchSource> tags;
  std::vector<std::int64_t> gold_stream, noisy_stream;
  for (std::int64_t i = 0; i < n_batches; ++i) {
    auto d = plan.next();
    tags.push_back(d.source);
    auto& stream = d.source == BatchSource::gold ? gold_stream : noisy_stream;
    (d.source == BatchSource::gold ? audit.gold_batches : audit.noisy_batches) += 1;
    if (d.ids.empty() || d.ids.size() > batch_size) audit.problem = "batch " + std::to_string(i) + " has bad size";
    stream.insert(stream.end(), d.ids.begin(), d.ids.end());
  }

  const int cycle = ratio.cycle();
  for (std::size_t start = 0; start + cycle <= tags.size(); start += cycle) {
    const auto g = std::count(tags.begin() + start, tags.begin() + start + cycle, BatchSource::gold);
    if (g != ratio.gold && audit.problem.empty())
      audit.problem = "cycle at batch " + std::to_string(start) + " has " + std::to_string(g) + " gold batches";
    // Gold batches come first within a cycle.
    for (int k = 0; k < cycle; ++k) {
      const auto want = k < ratio.gold ? BatchSource::gold : BatchSource::noisy;
      if (tags[start + k] != want && audit.problem.empty())
        audit.problem = "cycle at batch " + std::to_string(start) + " is out of order";
    }
    ++audit.full_cycles;
  }

  auto check_epochs = [&](const std::vector<std::int64_t>& stream, std::int64_t n, const char* what) {
    std::int64_t epochs = 0;
    for (std::size_t start = 0; n > 0 && start + n <= stream.size(); start += static_cast<std::size_t>(n)) {
      std::vector<std::int64_t> epoch(stream.begin() + start, stream.begin() + start + n);
      std::sort(epoch.begin(), epoch.end());
      if (epoch != ids(n) && audit.problem.empty())
        audit.problem = std::string(what) + " epoch " + std::to_string(epochs) + " is not a permutation";
      ++epochs;
    }
    return epochs;
  };
  audit.full_gold_epochs = check_epochs(gold_stream, gold_size, "gold");
  check_epochs(noisy_stream, noisy_size, "noisy");
  return audit;
}

}  // namespace nl2lf::testing
