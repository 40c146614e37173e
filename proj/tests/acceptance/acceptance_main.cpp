// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any selected criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "model_probes.hpp"
#include "naive_bleu.hpp"
#include "nl2lf/batch.hpp"
#include "nl2lf/corpus.hpp"
#include "nl2lf/decode.hpp"
#include "nl2lf/eval.hpp"
#include "nl2lf/trainer.hpp"
#include "op_cases.hpp"
#include "schedule_check.hpp"
#include "toy_run.hpp"

using namespace nl2lf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << x;
  return os.str();
}

model::ModelConfig desk_config(int vocab_size) {
  model::ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.d_model = 128;
  cfg.n_heads = 4;
  cfg.d_ff = 512;
  cfg.n_encoder_layers = 2;
  cfg.n_decoder_layers = 2;
  cfg.n_relative_buckets = 32;
  cfg.max_relative_distance = 128;
  cfg.dropout_rate = 0.0;
  return cfg;
}

// 1. Finite differences on every op and on the 1-layer toy model.
Outcome gradients() {
  double worst = 0;
  std::string where;
  auto cases = testing::op_cases();
  model::ModelConfig toy;
  toy.vocab_size = 50;
  toy.d_model = 8;
  toy.n_heads = 2;
  toy.d_ff = 16;
  toy.n_encoder_layers = 1;
  toy.n_decoder_layers = 1;
  toy.n_relative_buckets = 8;
  toy.max_relative_distance = 16;
  cases.push_back(testing::model_case(toy, 13));
  for (auto& c : cases) {
    const auto r = testing::check_gradients(c.inputs, c.loss, 1e-3);
    if (r.worst_rel_error >= worst) {
      worst = r.worst_rel_error;
      where = c.name + "/" + r.worst_input;
    }
  }
  return {worst < 1e-4, std::to_string(cases.size()) + " cases, worst relative error " + fmt(worst) + " at " + where};
}

// 2. Desk config memorises 32 pairs.
Outcome overfit() {
  const auto all = corpus::load_nl2lf(testing::data_dir() / "nl2lf_synthetic.jsonl");
  const std::vector<corpus::Example> pairs(all.begin(), all.begin() + 32);
  const auto vocab = tokenizer::train_bpe(testing::texts_of(all), 4000);
  const auto cfg = desk_config(static_cast<int>(vocab.size()));

  training::TrainConfig tc;
  tc.batch_size = 32;
  tc.max_src_len = 64;
  tc.max_tgt_len = 64;
  tc.decode_max_len = 64;
  tc.learning_rate = 1e-3;
  tc.max_epochs = 500;
  tc.eval_every = 25;
  tc.patience = 2;
  tc.seed = 1;
  tc.interleave = {1, 0};
  // Selection runs on the training pairs themselves: dev = train.
  const auto result = training::fit(cfg, vocab, {pairs, {}, pairs}, tc);
  const auto& params = result.best.params;

  const auto batch = training::make_batch(pairs, vocab, tc.max_src_len, tc.max_tgt_len);
  const double acc = training::token_accuracy(params, cfg, batch);
  const auto report = eval::evaluate(params, cfg, vocab, pairs, tc.max_src_len, tc.decode_max_len);
  std::size_t exact = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto src = vocab.encode(pairs[i].intent, tc.max_src_len, true);
    const auto want = vocab.encode(pairs[i].snippet, tc.max_tgt_len, true).ids;
    const auto got = decode::greedy(params, cfg, src, tc.decode_max_len);
    exact += got.ids == want;
  }
  const std::int64_t epochs = result.history.empty() ? 0 : result.history.back().epoch;
  const bool pass = acc >= 0.99 && exact >= 30 && report.bleu > 95 && epochs <= 500;
  return {pass, "token accuracy " + fmt(100 * acc) + "%, exact ids " + std::to_string(exact) + "/32, BLEU " +
                    fmt(report.bleu) + " after " + std::to_string(epochs) + " epochs (best at step " +
                    std::to_string(result.best_step) + ")"};
}

// 3. corpus_bleu against the naive counter on random sets.
Outcome bleu_oracle() {
  Rng rng(2024);
  double worst = 0;
  auto random_tokens = [&](std::size_t len, std::size_t alphabet) {
    eval::Tokens t;
    for (std::size_t i = 0; i < len; ++i) t.push_back("w" + std::to_string(rng.uniform_index(alphabet)));
    return t;
  };
  bool identical_ok = false, disjoint_ok = false;
  for (int set = 0; set < 100; ++set) {
    std::vector<eval::Tokens> hyps, refs;
    const std::size_t n = 1 + rng.uniform_index(20);
    const std::size_t alphabet = 2 + rng.uniform_index(12);
    for (std::size_t i = 0; i < n; ++i) {
      refs.push_back(random_tokens(1 + rng.uniform_index(15), alphabet));
      if (set == 0) {
        hyps.push_back(refs.back());  // identical
      } else if (set == 1) {
        eval::Tokens h;  // zero overlap: a disjoint vocabulary
        for (std::size_t k = 0, len = 1 + rng.uniform_index(15); k < len; ++k) h.push_back("z" + std::to_string(k));
        hyps.push_back(h);
      } else {
        hyps.push_back(random_tokens(rng.uniform_index(16), alphabet));
      }
    }
    std::vector<eval::TokenPair> pairs;
    for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(hyps[i], refs[i]);
    const double ours = eval::corpus_bleu(pairs);
    const double naive = testing::naive_corpus_bleu(hyps, refs);
    worst = std::max(worst, std::abs(ours - naive));
    if (set == 0) identical_ok = std::abs(ours - 100.0) < 1e-9;
    if (set == 1) disjoint_ok = ours < 1.0;
  }
  return {worst < 0.1 && identical_ok && disjoint_ok,
          "100 sets, worst gap " + fmt(worst) + ", identical set 100: " + (identical_ok ? "yes" : "no") +
              ", zero overlap below 1: " + (disjoint_ok ? "yes" : "no")};
}

// 4. Scheduler over 10,000 batches.
Outcome scheduler() {
  std::string detail;
  bool pass = true;
  for (auto ratio : {training::InterleaveRatio{1, 1}, training::InterleaveRatio{1, 3}, training::InterleaveRatio{2, 1}}) {
    const auto a = testing::audit_schedule(ratio, 10000, 193, 1000, 8, 11);
    const std::int64_t cycles = 10000 / ratio.cycle();
    const std::int64_t rem = 10000 % ratio.cycle();
    const std::int64_t want_gold = cycles * ratio.gold + std::min<std::int64_t>(rem, ratio.gold);
    const bool ok = a.problem.empty() && a.gold_batches == want_gold && a.full_cycles == cycles &&
                    a.full_gold_epochs > 0;
    pass = pass && ok;
    detail += (detail.empty() ? "" : "; ") + ratio.to_string() + " gold " + std::to_string(a.gold_batches) +
              " noisy " + std::to_string(a.noisy_batches) + " gold epochs " + std::to_string(a.full_gold_epochs) +
              (a.problem.empty() ? "" : " (" + a.problem + ")");
  }
  return {pass, detail};
}

// 5. Bit-exact reruns and resume, with dropout and interleaving on.
Outcome determinism() {
  testing::TempDir dir("accept_resume");
  auto run = testing::make_toy_run(9, true);
  run.model.dropout_rate = 0.1;
  run.train_config.max_epochs = 100;
  run.train_config.max_steps = 40;
  run.train_config.eval_every = 10;
  const auto a = training::fit(run.model, run.vocab, run.data(), run.train_config);
  const auto b = training::fit(run.model, run.vocab, run.data(), run.train_config);
  bool bit_exact = a.history.size() == 40 && b.history.size() == 40;
  for (std::size_t i = 0; bit_exact && i < a.history.size(); ++i)
    bit_exact = a.history[i].train_loss == b.history[i].train_loss;

  auto first = run.train_config;
  first.max_steps = 17;
  training::FitOptions save;
  save.out_dir = dir.path();
  training::fit(run.model, run.vocab, run.data(), first, save);
  training::FitOptions resume;
  resume.resume_from = dir / "last.ckpt";
  const auto r = training::fit(run.model, run.vocab, run.data(), run.train_config, resume);
  double worst = r.history.size() == a.history.size() ? 0.0 : 1e300;
  for (std::size_t i = 0; i < std::min(r.history.size(), a.history.size()); ++i)
    worst = std::max(worst, std::abs(r.history[i].train_loss - a.history[i].train_loss));
  return {bit_exact && worst <= 1e-6, std::string("rerun bit-exact: ") + (bit_exact ? "yes" : "no") +
                                          ", resume from step 17 worst loss gap " + fmt(worst)};
}

// 6. Fold plan sizes, disjointness, reproducibility and the aggregate.
Outcome cv_protocol() {
  const auto data = corpus::load_nl2lf(testing::data_dir() / "nl2lf_synthetic.jsonl");
  const auto plan = corpus::plan_folds(data, 5, 0.5, 7);
  const auto again = corpus::plan_folds(data, 5, 0.5, 7);
  bool pass = data.size() == 193 && plan.folds.size() == 5;
  for (std::size_t i = 0; pass && i < plan.folds.size(); ++i) {
    const auto& f = plan.folds[i];
    std::set<std::int64_t> train(f.train.begin(), f.train.end()), test(f.test.begin(), f.test.end());
    std::set<std::int64_t> both = train;
    both.insert(test.begin(), test.end());
    pass = f.train.size() == 97 && f.test.size() == 96 && train.size() == 97 && test.size() == 96 &&
           both.size() == 193 && f.train == again.folds[i].train && f.test == again.folds[i].test;
  }
  pass = pass && corpus::plan_folds(data, 5, 0.5, 8).folds[0].train != plan.folds[0].train;

  // Hand-computed: (30.5 + 41 + 28.25 + 35.75 + 39.5) / 5 = 35, (5 + 6 + 4 + 7 + 3) / 5 = 5.
  const double bleus[] = {30.5, 41.0, 28.25, 35.75, 39.5};
  const double accs[] = {5, 6, 4, 7, 3};
  std::vector<eval::EvalReport> reports(5);
  for (int i = 0; i < 5; ++i) {
    reports[i].bleu = bleus[i];
    reports[i].accuracy = accs[i];
    reports[i].n_examples = 96;
  }
  const auto s = eval::aggregate_folds(reports);
  const bool means = std::abs(s.mean_bleu - 35.0) < 1e-12 && std::abs(s.mean_accuracy - 5.0) < 1e-12;
  return {pass && means, std::string("5 folds of 97/96, disjoint and reproducible: ") + (pass ? "yes" : "no") +
                             ", means " + fmt(s.mean_bleu) + " / " + fmt(s.mean_accuracy)};
}

// 7. Noisy interleaving versus gold only at equal gold epochs.
Outcome interleaving(int gold_epochs, std::ostream& log) {
  const auto gold_all = corpus::load_gold(testing::data_dir() / "conala_gold_synthetic.json");
  const std::vector<corpus::Example> subset(gold_all.begin(), gold_all.begin() + 2000);
  const auto split = corpus::carve_dev(subset, 200, 0);
  const auto train = corpus::select(subset, split.train);
  const auto dev = corpus::select(subset, split.dev);
  const auto noisy = corpus::load_noisy(testing::data_dir() / "conala_mined_synthetic.jsonl", 0.0);

  std::vector<std::string> texts = testing::texts_of(train);
  for (const auto& t : testing::texts_of(noisy)) texts.push_back(t);
  const auto vocab = tokenizer::train_bpe(texts, 4000);
  const auto cfg = desk_config(static_cast<int>(vocab.size()));

  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    training::TrainConfig tc;
    tc.max_epochs = gold_epochs;
    tc.eval_every = 0;
    tc.seed = seed;
    tc.interleave = {1, 0};
    const auto gold_only = training::fit(cfg, vocab, {train, {}, dev}, tc);
    tc.interleave = {1, 1};
    const auto mixed = training::fit(cfg, vocab, {train, noisy, dev}, tc);
    const double g = gold_only.best_dev_bleu.value_or(0.0);
    const double m = mixed.best_dev_bleu.value_or(0.0);
    wins += m >= g;
    log << "  seed " << seed << ": gold-only " << fmt(g) << " (" << gold_only.steps << " steps), interleaved "
        << fmt(m) << " (" << mixed.steps << " steps)" << std::endl;
    detail += (detail.empty() ? "" : ", ") + fmt(m) + " vs " + fmt(g);
  }
  return {wins >= 3, "interleaved >= gold-only in " + std::to_string(wins) + "/5 seeds (" + detail + ")"};
}

// 8. Causality, padding and batch-independence probes on random configs.
// Leakage is measured in double; float runs differ by GEMM rounding alone
// (padded widths change the summation order), so they are only reported.
template <typename T>
double worst_leak(std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0;
  const int heads_choice[] = {1, 2, 4};
  for (int trial = 0; trial < 50; ++trial) {
    model::ModelConfig cfg;
    cfg.n_heads = heads_choice[rng.uniform_index(3)];
    cfg.d_model = cfg.n_heads * static_cast<int>(2 + rng.uniform_index(7));
    cfg.d_ff = 8 + static_cast<int>(rng.uniform_index(32));
    cfg.n_encoder_layers = 1 + static_cast<int>(rng.uniform_index(3));
    cfg.n_decoder_layers = 1 + static_cast<int>(rng.uniform_index(3));
    cfg.vocab_size = 20 + static_cast<int>(rng.uniform_index(60));
    cfg.n_relative_buckets = 4 + static_cast<int>(rng.uniform_index(29));
    cfg.max_relative_distance = 8 + static_cast<int>(rng.uniform_index(120));
    auto params = model::init_params<T>(cfg, 100 + trial);
    for (const auto& [name, t] : params.items())
      if (name.ends_with("relative_bias"))
        for (auto& x : t->data()) x = static_cast<T>(rng.normal());
    const int s = 2 + static_cast<int>(rng.uniform_index(8));
    const int t = 2 + static_cast<int>(rng.uniform_index(8));
    worst = std::max(worst, testing::causality_gap(params, cfg, rng, s, t));
    worst = std::max(worst, testing::padding_gap(params, cfg, rng, s, t, 1 + static_cast<int>(rng.uniform_index(5))));
    worst = std::max(worst, testing::batch_leak_gap(params, cfg, rng, 2 + static_cast<int>(rng.uniform_index(4)), s, t));
  }
  return worst;
}

Outcome masking() {
  const double worst = worst_leak<double>(31);
  const double in_float = worst_leak<float>(31);
  return {worst < 1e-5, "50 configs, worst leakage " + fmt(worst) + " (float32 rounding spread " + fmt(in_float) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nl2lf acceptance checks"};
  std::vector<int> selected;
  int gold_epochs = 3;
  app.add_option("--criterion", selected, "criteria to run (default: all)")->check(CLI::Range(1, 8));
  app.add_option("--gold-epochs", gold_epochs, "gold epochs per run in criterion 7")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient check", gradients},
      {"overfit 32 pairs", overfit},
      {"BLEU oracle", bleu_oracle},
      {"scheduler fidelity", scheduler},
      {"determinism and resume", determinism},
      {"cv protocol", cv_protocol},
      {"noisy interleaving", [&] { return interleaving(gold_epochs, std::cout); }},
      {"masking invariants", masking},
  };
  // Runtime ceilings in seconds, 0 for none.
  const double limits[] = {120, 600, 0, 0, 0, 0, 0, 0};

  bool all_pass = true;
  for (int n : selected) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[n - 1].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (limits[n - 1] > 0 && secs > limits[n - 1]) {
      o.pass = false;
      o.detail += "; over the " + fmt(limits[n - 1]) + "s limit";
    }
    all_pass = all_pass && o.pass;
    std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[n - 1].first << ": "
              << o.detail << " [" << fmt(secs, 3) << "s]" << std::endl;
  }
  return all_pass ? 0 : 1;
}
