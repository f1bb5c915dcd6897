#include "gkg/training.hpp"

#include <cmath>
#include <cstdlib>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gkg/errors.hpp"
#include "gkg/losses.hpp"
#include "gkg/ops.hpp"
#include "gkg/optim.hpp"
#include "gkg/random.hpp"

namespace gkg {

Classifier as_classifier(GkgModel& model) {
  return Classifier{[&model](Tape& t, const ParamStore& s, const Tensor& image) { return model.logits(t, s, image); },
                    &model.params()};
}

Classifier as_classifier(LinearBaseline& model) {
  return Classifier{[&model](Tape& t, const ParamStore& s, const Tensor& image) { return model.logits(t, s, image); },
                    &model.params()};
}

std::size_t worker_count() {
  if (const char* env = std::getenv("GKG_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::uint8_t> flat_targets(const std::vector<MultiLabelSample>& samples) {
  std::vector<std::uint8_t> out;
  for (const auto& s : samples) out.insert(out.end(), s.labels.begin(), s.labels.end());
  return out;
}

Tensor predict_scores(const Classifier& model, const std::vector<MultiLabelSample>& samples) {
  if (samples.empty()) throw ArgumentError("predict_scores: no samples");
  const std::size_t L = samples.front().labels.size();
  Tensor scores({samples.size(), L});
  parallel_for(samples.size(), [&](std::size_t i) {
    Tape tape(false);
    const Tensor& z = tape.value(model.logits(tape, *model.params, samples[i].image));
    if (z.size() != L) throw DimensionError("model emits " + std::to_string(z.size()) + " logits, dataset has " +
                                            std::to_string(L) + " labels");
    for (std::size_t c = 0; c < L; ++c) scores(i, c) = ops::sigmoid(z[c]);
  });
  return scores;
}

double mean_loss(const Classifier& model, const std::vector<MultiLabelSample>& samples, const LossConfig& loss) {
  std::vector<double> losses(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    Tape tape(false);
    const Tensor& z = tape.value(model.logits(tape, *model.params, samples[i].image));
    losses[i] = total_loss(z.data(), samples[i].labels, loss);
  });
  double sum = 0;
  for (double v : losses) sum += v;
  return sum / static_cast<double>(samples.size());
}

std::string epoch_log_line(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch},       {"lr", r.lr},          {"train_loss", r.train_loss},
                   {"val_map", r.val.map},   {"val_cf1", r.val.cf1}, {"val_of1", r.val.of1},
                   {"val_op", r.val.op},     {"val_or", r.val.or_},  {"val_cp", r.val.cp},
                   {"val_cr", r.val.cr}};
  return j.dump();
}

TrainResult train(const RunConfig& config, const Classifier& model, const std::vector<MultiLabelSample>& train_set,
                  const std::vector<MultiLabelSample>& val_set, const TrainOptions& options) {
  if (train_set.empty() || val_set.empty()) throw ArgumentError("train: empty dataset");
  ParamStore& store = *model.params;
  const auto& opt = config.optimizer;
  if (config.precision == Precision::f32) store.round_values_to_f32();

  AdamW adamw(AdamWConfig{opt.beta1, opt.beta2, opt.eps, opt.weight_decay});
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  TrainResult result;
  const auto val_targets = flat_targets(val_set);

  auto emit = [&](EpochRecord record) {
    if (options.log) *options.log << epoch_log_line(record) << "\n" << std::flush;
    if (options.on_epoch) options.on_epoch(record, store);
    result.epochs.push_back(std::move(record));
  };

  {
    EpochRecord initial;
    initial.epoch = 0;
    initial.train_loss = mean_loss(model, train_set, config.loss);
    if (!std::isfinite(initial.train_loss)) throw NumericError("initial training loss is not finite");
    initial.val = evaluate(predict_scores(model, val_set), val_targets);
    emit(std::move(initial));
  }

  const std::size_t batch = opt.batch_size;
  std::vector<GradBuffer> grads(std::min(batch, train_set.size()), GradBuffer(store));
  std::vector<double> losses(grads.size());
  // Indexed by sample so the epoch mean is summed in dataset order, the same
  // order mean_loss uses for the epoch-0 line.
  std::vector<double> sample_losses(train_set.size());
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    double lr = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      parallel_for(count, [&](std::size_t b) {
        const auto& sample = train_set[order[start + b]];
        Tape tape;
        Var z = model.logits(tape, store, sample.image);
        Var loss = total_loss(tape, z, sample.labels, config.loss);
        losses[b] = tape.value(loss)[0];
        tape.backward(loss);
        grads[b].zero();
        tape.accumulate_into(grads[b]);
      });
      store.zero_grad();
      for (std::size_t b = 0; b < count; ++b) {
        if (!std::isfinite(losses[b])) {
          throw NumericError("non-finite training loss at epoch " + std::to_string(epoch + 1) + ", step " +
                             std::to_string(result.steps + 1));
        }
        sample_losses[order[start + b]] = losses[b];
        grads[b].add_into(store, 1.0 / static_cast<double>(count));
      }
      lr = scheduled_lr(opt.lr, result.steps, opt.warmup_steps, epoch, opt.decay_epochs);
      ++result.steps;
      if (lr > 0) {
        adamw.step(store, lr, result.steps);
        if (config.precision == Precision::f32) store.round_values_to_f32();
      }
    }
    EpochRecord record;
    record.epoch = epoch + 1;
    record.step = result.steps;
    record.lr = lr;
    double loss_sum = 0;
    for (double v : sample_losses) loss_sum += v;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    record.val = evaluate(predict_scores(model, val_set), val_targets);
    emit(std::move(record));
  }
  std::ostringstream state;
  state << rng;
  result.rng_state = state.str();
  return result;
}

}  // namespace gkg
