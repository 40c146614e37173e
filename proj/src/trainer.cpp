#include "nl2lf/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include "nl2lf/errors.hpp"
#include "nl2lf/eval.hpp"
#include "nl2lf/random.hpp"

namespace nl2lf::training {

namespace {

tensor::TensorPtr<float> batch_logits(tensor::Tape<float>& tape, const model::Parameters<float>& params,
                                      const model::ModelConfig& cfg, const Batch& batch, Rng* dropout_rng) {
  model::Forward<float> f{tape, params, cfg, dropout_rng};
  const auto enc = model::encode(f, batch.source);
  const auto logits = model::decode_logits(f, enc, batch.decoder_input);
  return tensor::reshape(tape, logits, {batch.target.rows * batch.target.cols, cfg.vocab_size});
}

std::string join_ids(std::span<const std::int64_t> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i]);
  }
  return out.empty() ? "?" : out;
}

}  // namespace

double train_step(model::Parameters<float>& params, const model::ModelConfig& cfg, Adam& opt, const Batch& batch,
                  const TrainConfig& tc, Rng* dropout_rng, std::int64_t step, std::span<const std::int64_t> batch_ids) {
  params.zero_grad();
  tensor::Tape<float> tape(true);
  const auto logits = batch_logits(tape, params, cfg, batch, dropout_rng);
  const auto loss = tensor::cross_entropy(tape, logits, batch.target.ids, tokenizer::kPad,
                                          std::span<const float>(batch.token_weights));
  const double value = loss->item();
  if (!std::isfinite(value)) {
    throw NumericalError("non-finite training loss at step " + std::to_string(step) + " (batch ids " +
                         join_ids(batch_ids) + ")");
  }
  tape.backward(loss);
  if (tc.clip_norm > 0) clip_grad_norm(params, tc.clip_norm);
  opt.step(params);
  return value;
}

double token_accuracy(const model::Parameters<float>& params, const model::ModelConfig& cfg, const Batch& batch) {
  tensor::Tape<float> tape(false);
  const auto logits = batch_logits(tape, params, cfg, batch, nullptr);
  const auto data = logits->data();
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  std::size_t correct = 0, total = 0;
  for (std::size_t row = 0; row < batch.target.ids.size(); ++row) {
    if (!batch.loss_mask[row]) continue;
    const auto begin = data.begin() + static_cast<std::ptrdiff_t>(row * v);
    const auto best = std::max_element(begin, begin + static_cast<std::ptrdiff_t>(v)) - begin;
    correct += best == batch.target.ids[row];
    ++total;
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

nlohmann::json HistoryRow::to_json() const {
  nlohmann::json j = {{"step", step}, {"train_loss", train_loss}, {"tag", to_string(tag)}, {"epoch", epoch}};
  j["dev_bleu"] = dev_bleu ? nlohmann::json(*dev_bleu) : nlohmann::json(nullptr);
  return j;
}

HistoryRow HistoryRow::from_json(const nlohmann::json& doc) {
  HistoryRow r;
  r.step = doc.at("step").get<std::int64_t>();
  r.train_loss = doc.at("train_loss").get<double>();
  r.tag = doc.at("tag").get<std::string>() == "noisy" ? BatchSource::noisy : BatchSource::gold;
  r.epoch = doc.at("epoch").get<std::int64_t>();
  if (!doc.at("dev_bleu").is_null()) r.dev_bleu = doc.at("dev_bleu").get<double>();
  return r;
}

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::patience: return "patience";
    case StopReason::max_steps: return "max_steps";
  }
  return "?";
}

void write_history_csv(std::span<const HistoryRow> history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.precision(17);
  out << "step,train_loss,dev_bleu,tag\n";
  for (const auto& r : history) {
    out << r.step << ',' << r.train_loss << ',';
    if (r.dev_bleu) out << *r.dev_bleu;
    out << ',' << to_string(r.tag) << '\n';
  }
}

void check_resume_compatible(const TrainConfig& saved, const TrainConfig& requested) {
  TrainConfig a = saved, b = requested;
  for (TrainConfig* c : {&a, &b}) {
    c->max_epochs = 0;
    c->max_steps = 0;
    c->patience = 0;
  }
  if (!(a == b)) {
    throw CheckpointError("incompatible resume: training settings differ from the checkpoint (saved " +
                          saved.to_json().dump() + ", requested " + requested.to_json().dump() + ")");
  }
}

namespace {

class FitLoop {
 public:
  FitLoop(const model::ModelConfig& cfg, const tokenizer::Vocabulary& vocab, const TrainingData& data,
          const TrainConfig& tc, const FitOptions& options)
      : cfg_(cfg),
        vocab_(vocab),
        data_(data),
        tc_(tc),
        options_(options),
        params_(model::init_params<float>(cfg, derive_seed(tc.seed, 0))),
        opt_(params_, AdamConfig{tc.learning_rate}),
        plan_(make_plan()),
        dropout_rng_(derive_seed(tc.seed, 3)) {
    encode_all(data.train, train_src_, train_tgt_);
    encode_all(data.auxiliary, aux_src_, aux_tgt_);
  }

  FitResult run() {
    if (options_.resume_from) resume(*options_.resume_from);
    if (options_.out_dir) std::filesystem::create_directories(*options_.out_dir);

    std::optional<StopReason> stop;
    while (!stop) {
      if (plan_.completed_epochs() >= tc_.max_epochs) {
        stop = StopReason::max_epochs;
        break;
      }
      if (tc_.max_steps > 0 && step_ >= tc_.max_steps) {
        stop = StopReason::max_steps;
        break;
      }
      const auto epochs_before = plan_.completed_epochs();
      const auto desc = plan_.next();
      const Batch batch = build(desc);
      HistoryRow row;
      row.train_loss = train_step(params_, cfg_, opt_, batch, tc_, &dropout_rng_, step_ + 1, desc.ids);
      row.step = ++step_;
      row.tag = desc.source;
      row.epoch = plan_.completed_epochs();

      const bool due = tc_.eval_every > 0 ? step_ % tc_.eval_every == 0 : row.epoch > epochs_before;
      if (due) {
        row.dev_bleu = evaluate_dev();
        if (tc_.patience >= 0 && evals_since_improvement_ > tc_.patience) stop = StopReason::patience;
      }
      history_.push_back(row);
      if (options_.on_step) options_.on_step(row);
      if (options_.log && (due || step_ % 50 == 0)) {
        *options_.log << "step " << step_ << " epoch " << row.epoch << " loss " << row.train_loss;
        if (row.dev_bleu) *options_.log << " dev_bleu " << *row.dev_bleu;
        *options_.log << '\n';
      }
      const bool checkpoint_due = tc_.checkpoint_every > 0 ? step_ % tc_.checkpoint_every == 0 : due;
      if (checkpoint_due && options_.out_dir) save_checkpoint(snapshot(), *options_.out_dir / "last.ckpt");
    }

    // A final evaluation so the last epoch's parameters compete for "best".
    if (*stop == StopReason::max_epochs && step_ > 0 && !history_.back().dev_bleu) {
      history_.back().dev_bleu = evaluate_dev();
    }
    if (options_.out_dir) {
      save_checkpoint(snapshot(), *options_.out_dir / "last.ckpt");
      write_history_csv(history_, *options_.out_dir / "history.csv");
    }

    FitResult result;
    result.best = snapshot();
    if (best_params_) result.best.params = best_params_->clone();
    result.best.best_params.reset();
    result.history = history_;
    result.stop_reason = *stop;
    result.best_dev_bleu = best_bleu_;
    result.best_step = best_step_;
    result.steps = step_;
    if (options_.out_dir) write_metrics(result);
    return result;
  }

 private:
  BatchPlan make_plan() const {
    std::vector<std::int64_t> gold_ids(data_.train.size());
    std::iota(gold_ids.begin(), gold_ids.end(), 0);
    std::optional<EpochSampler> noisy;
    if (!data_.auxiliary.empty()) {
      std::vector<std::int64_t> aux_ids(data_.auxiliary.size());
      std::iota(aux_ids.begin(), aux_ids.end(), 0);
      noisy.emplace(std::move(aux_ids), tc_.batch_size, derive_seed(tc_.seed, 2));
    }
    if (data_.dev.empty()) throw ParameterError("fit: the dev set is empty");
    return BatchPlan(EpochSampler(std::move(gold_ids), tc_.batch_size, derive_seed(tc_.seed, 1)), std::move(noisy),
                     tc_.interleave);
  }

  void encode_all(std::span<const corpus::Example> examples, std::vector<tokenizer::TokenSequence>& src,
                  std::vector<tokenizer::TokenSequence>& tgt) const {
    src.reserve(examples.size());
    tgt.reserve(examples.size());
    for (const auto& ex : examples) {
      src.push_back(vocab_.encode(ex.intent, tc_.max_src_len, true));
      tgt.push_back(vocab_.encode(ex.snippet, tc_.max_tgt_len, true));
    }
  }

  Batch build(const BatchDescriptor& desc) const {
    const bool gold = desc.source == BatchSource::gold;
    const auto& examples = gold ? data_.train : data_.auxiliary;
    const auto& src = gold ? train_src_ : aux_src_;
    const auto& tgt = gold ? train_tgt_ : aux_tgt_;
    std::vector<tokenizer::TokenSequence> s, t;
    std::vector<double> w;
    for (const auto id : desc.ids) {
      const auto i = static_cast<std::size_t>(id);
      s.push_back(src[i]);
      t.push_back(tgt[i]);
      if (tc_.weighted_loss) w.push_back(examples[i].weight);
    }
    return make_batch(s, t, w);
  }

  double evaluate_dev() {
    const double bleu =
        eval::evaluate(params_, cfg_, vocab_, data_.dev, tc_.max_src_len, tc_.decode_max_len).bleu;
    if (!best_bleu_ || bleu > *best_bleu_) {
      best_bleu_ = bleu;
      best_step_ = step_;
      best_params_ = params_.clone();
      evals_since_improvement_ = 0;
      if (options_.out_dir) {
        auto ckpt = snapshot();
        ckpt.best_params.reset();
        save_checkpoint(ckpt, *options_.out_dir / "best.ckpt");
      }
    } else {
      ++evals_since_improvement_;
    }
    return bleu;
  }

  Checkpoint snapshot() const {
    Checkpoint c;
    c.model = cfg_;
    c.train = tc_;
    c.vocab = vocab_;
    c.params = params_.clone();
    c.adam_m = opt_.first_moments();
    c.adam_v = opt_.second_moments();
    c.adam_step = opt_.steps();
    c.step = step_;
    c.best_dev_bleu = best_bleu_;
    c.rng_state = dropout_rng_.state();
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& r : history_) hist.push_back(r.to_json());
    c.trainer_state = {{"plan", plan_.state()},
                       {"history", std::move(hist)},
                       {"evals_since_improvement", evals_since_improvement_},
                       {"best_step", best_step_}};
    if (best_params_) c.best_params = best_params_->clone();
    return c;
  }

  void resume(const std::filesystem::path& path) {
    Checkpoint c = load_checkpoint(path, &vocab_);
    if (!(c.model == cfg_)) {
      throw CheckpointError("incompatible resume: model config differs from '" + path.string() + "'");
    }
    check_resume_compatible(c.train, tc_);
    params_ = std::move(c.params);
    opt_.first_moments() = std::move(c.adam_m);
    opt_.second_moments() = std::move(c.adam_v);
    opt_.set_steps(c.adam_step);
    step_ = c.step;
    best_bleu_ = c.best_dev_bleu;
    dropout_rng_.restore(c.rng_state);
    try {
      plan_.restore(c.trainer_state.at("plan"));
      history_.clear();
      for (const auto& r : c.trainer_state.at("history")) history_.push_back(HistoryRow::from_json(r));
      evals_since_improvement_ = c.trainer_state.at("evals_since_improvement").get<int>();
      best_step_ = c.trainer_state.at("best_step").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(std::string("corrupt checkpoint: section 'trainer_state': ") + e.what());
    }
    if (c.best_params) best_params_ = std::move(*c.best_params);
    if (options_.log) *options_.log << "resumed from " << path.string() << " at step " << step_ << '\n';
  }

  void write_metrics(const FitResult& r) const {
    std::int64_t gold = 0, noisy = 0;
    for (const auto& row : history_) (row.tag == BatchSource::gold ? gold : noisy) += 1;
    nlohmann::json m = {{"steps", r.steps},
                        {"epochs", plan_.completed_epochs()},
                        {"stop_reason", to_string(r.stop_reason)},
                        {"best_step", r.best_step},
                        {"final_train_loss", history_.empty() ? 0.0 : history_.back().train_loss},
                        {"batches", {{"gold", gold}, {"noisy", noisy}}},
                        {"interleave", tc_.interleave.to_string()},
                        {"parameter_count", params_.count()},
                        {"vocab_hash", vocab_.hash()}};
    m["best_dev_bleu"] = r.best_dev_bleu ? nlohmann::json(*r.best_dev_bleu) : nlohmann::json(nullptr);
    std::ofstream out(*options_.out_dir / "metrics.json");
    out << m.dump(2) << '\n';
  }

  const model::ModelConfig& cfg_;
  const tokenizer::Vocabulary& vocab_;
  TrainingData data_;
  TrainConfig tc_;
  const FitOptions& options_;
  model::Parameters<float> params_;
  Adam opt_;
  BatchPlan plan_;
  Rng dropout_rng_;
  std::vector<tokenizer::TokenSequence> train_src_, train_tgt_, aux_src_, aux_tgt_;
  std::int64_t step_ = 0;
  std::optional<double> best_bleu_;
  std::int64_t best_step_ = 0;
  std::optional<model::Parameters<float>> best_params_;
  int evals_since_improvement_ = 0;
  std::vector<HistoryRow> history_;
};

}  // namespace

FitResult fit(const model::ModelConfig& cfg, const tokenizer::Vocabulary& vocab, const TrainingData& data,
              const TrainConfig& tc, const FitOptions& options) {
  tc.validate();
  cfg.validate();
  if (static_cast<std::size_t>(cfg.vocab_size) != vocab.size()) {
    throw ConfigError("model vocab_size " + std::to_string(cfg.vocab_size) + " does not match the vocabulary (" +
                      std::to_string(vocab.size()) + " pieces)");
  }
  FitLoop loop(cfg, vocab, data, tc, options);
  return loop.run();
}

}  // namespace nl2lf::training
