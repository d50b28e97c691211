// SPDX-License-Identifier: Apache-2.0
#include "camc/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "camc/channel.hpp"
#include "camc/log.hpp"

namespace camc::train {

using models::ForwardContext;
using models::Mode;
using models::Tape;

namespace {

constexpr std::size_t kEvalBatch = 500;

std::vector<int> gather_labels(const Features& f, std::span<const std::size_t> idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = f.labels[idx[i]];
  return out;
}

std::string format_history(const TrainHistory& h) {
  std::ostringstream os;
  os << "epoch history:\n" << history_csv(h);
  return os.str();
}

// Parameter values, including batch-norm statistics.
std::vector<Tensor> snapshot(const std::vector<models::Param*>& ps) {
  std::vector<Tensor> out;
  out.reserve(ps.size());
  for (const auto* p : ps) out.push_back(p->value());
  return out;
}

void restore(const std::vector<models::Param*>& ps, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value() = values[i];
}

std::size_t count_correct(const Tensor& scores, std::span<const int> labels) {
  const std::size_t m = scores.dim(1);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto row = scores.span().subspan(r * m, m);
    if (static_cast<int>(models::argmax(row)) == labels[r]) ++correct;
  }
  return correct;
}

// Shared epoch loop. `step` runs forward/backward on one batch and returns
// the loss; `validate` returns validation loss/accuracy in infer mode.
template <typename Step, typename Validate>
TrainResult run_epochs(const std::vector<models::Param*>& all, const std::vector<models::Param*>& trainable,
                       const Features& f, const datasetio::Dataset& ds, const TrainConfig& cfg, Step&& step,
                       Validate&& validate) {
  TrainResult result;
  result.split = split_dataset(ds, cfg);
  auto& hist = result.history;
  auto order = result.split.train;
  if (order.size() < 2) throw SplitError("training split has fewer than 2 frames");

  nc::Adam<float> adam(trainable, nc::AdamConfig{cfg.lr});
  nc::Rng rng(cfg.seed ^ 0x5452414e4bull);
  std::vector<Tensor> best = snapshot(all);
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      // a one-row batch has no batch statistics
      if (n < 2) continue;
      const std::span<const std::size_t> idx(order.data() + start, n);
      const Tensor x = gather(f, idx);
      const auto labels = gather_labels(f, idx);
      adam.zero_grad();
      const double loss = step(x, labels, rng);
      if (!std::isfinite(loss)) {
        EpochRecord rec{epoch, loss, std::nan(""), std::nan("")};
        hist.epochs.push_back(rec);
        throw TrainDivergence("training loss became non-finite in epoch " + std::to_string(epoch) + "\n" +
                              format_history(hist));
      }
      if (!cfg.frozen) adam.step();
      loss_sum += loss * static_cast<double>(n);
      seen += n;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(seen, 1));
    const EvalLoss v = validate(result.split.val);
    rec.val_loss = v.loss;
    rec.val_acc = v.accuracy;
    hist.epochs.push_back(rec);
    log::info("epoch " + std::to_string(epoch) + " train_loss=" + std::to_string(rec.train_loss) +
              " val_loss=" + std::to_string(rec.val_loss) + " val_acc=" + std::to_string(rec.val_acc));
    if (!std::isfinite(rec.val_loss))
      throw TrainDivergence("validation loss became non-finite in epoch " + std::to_string(epoch) + "\n" +
                            format_history(hist));

    if (rec.val_loss < hist.best_val_loss) {
      hist.best_val_loss = rec.val_loss;
      hist.best_epoch = epoch;
      best = snapshot(all);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      hist.reason = StopReason::Patience;
      break;
    }
  }
  restore(all, best);
  return result;
}

}  // namespace

// ---- configuration ---------------------------------------------------------

double SnrSchedule::draw(nc::Rng& rng) const {
  switch (kind) {
    case Kind::Noiseless:
      return channel::kInfiniteSnr;
    case Kind::Fixed:
      return fixed_db;
    case Kind::Uniform:
      return std::uniform_real_distribution<double>(lo_db, hi_db)(rng);
  }
  return channel::kInfiniteSnr;
}

std::string SnrSchedule::describe() const {
  switch (kind) {
    case Kind::Noiseless:
      return "noiseless";
    case Kind::Fixed:
      return "fixed(" + std::to_string(fixed_db) + ")";
    case Kind::Uniform:
      return "uniform(" + std::to_string(lo_db) + "," + std::to_string(hi_db) + ")";
  }
  return "?";
}

void SnrSchedule::validate() const {
  if (kind == Kind::Fixed && !std::isfinite(fixed_db))
    throw std::invalid_argument("fixed transmission SNR must be finite (use the noiseless schedule for +inf)");
  if (kind == Kind::Uniform && !(std::isfinite(lo_db) && std::isfinite(hi_db) && lo_db <= hi_db))
    throw std::invalid_argument("uniform transmission SNR range must be finite with lo <= hi");
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and >= 0");
  if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (patience == 0 || patience >= max_epochs)
    throw std::invalid_argument("patience must satisfy 0 < patience < max_epochs");
  if (!(train_fraction > 0 && val_fraction > 0 && test_fraction > 0))
    throw std::invalid_argument("split fractions must be positive");
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");
  schedule.validate();
}

std::string to_string(StopReason r) { return r == StopReason::Patience ? "patience" : "max_epochs"; }

std::uint64_t validation_noise_seed(std::uint64_t seed) { return seed ^ 0x56414c4e4f495345ull; }

// ---- data ------------------------------------------------------------------

Split split_dataset(const datasetio::Dataset& ds, const TrainConfig& cfg) {
  if (ds.frames.empty()) throw SplitError("cannot split an empty dataset");
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < ds.frames.size(); ++i)
    cells[{ds.frames[i].label_id, ds.frames[i].sensing_snr_db}].push_back(i);

  nc::Rng rng(cfg.seed ^ 0x53504c4954ull);
  Split s;
  for (auto& [key, idx] : cells) {
    const std::size_t n = idx.size();
    if (n < 3)
      throw SplitError("cell (label " + std::to_string(key.first) + ", snr " + std::to_string(key.second) +
                       " dB) has " + std::to_string(n) + " frames; stratification needs at least 3");
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.val_fraction));
    auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.test_fraction));
    n_val = std::clamp<std::size_t>(n_val, 1, n - 2);
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1 - n_val);
    const std::size_t n_train = n - n_val - n_test;
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.insert(s.val.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                 idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Features extract_features(const datasetio::Dataset& ds) {
  const std::size_t n = ds.frames.size(), len = ds.header.frame_length;
  const bool normalize = (ds.header.flags & datasetio::kFlagNormalizedAp) != 0;
  Features f;
  f.frame_length = len;
  f.classes = ds.header.class_names.size();
  f.ap = Tensor({n, len, 2});
  f.labels.resize(n);
  f.snr_db.resize(n);
  sigsyn::ComplexFrame frame;
  frame.samples.resize(len);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = ds.frames[i];
    for (std::size_t l = 0; l < len; ++l) frame.samples[l] = {r.iq[2 * l], r.iq[2 * l + 1]};
    const Tensor ap = models::ap_features(frame, normalize);
    std::copy(ap.data(), ap.data() + ap.size(), f.ap.data() + i * len * 2);
    f.labels[i] = r.label_id;
    f.snr_db[i] = r.sensing_snr_db;
  }
  return f;
}

Tensor gather(const Features& f, std::span<const std::size_t> idx) {
  const std::size_t per = f.frame_length * 2;
  Tensor out({idx.size(), f.frame_length, 2});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(f.ap.data() + idx[i] * per, per, out.data() + i * per);
  return out;
}

void add_channel_noise(Tensor& z, const SnrSchedule& sched, nc::Rng& rng) {
  if (sched.kind == SnrSchedule::Kind::Noiseless) return;
  const std::size_t rows = z.dim(0), n = z.size() / rows;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = z.span().subspan(r * n, n);
    const auto w = channel::draw_noise(row, sched.draw(rng), rng);
    for (std::size_t j = 0; j < n; ++j) row[j] += w[j];
  }
}

// ---- training --------------------------------------------------------------

double joint_backward(Model& sscnet, Model& mcnet, const Tensor& ap_batch, std::span<const int> labels,
                      const SnrSchedule& sched, nc::Rng& rng, Mode mode) {
  Tape tape;
  ForwardContext ctx{mode, &rng};
  auto z = sscnet.forward(tape, tape.constant(ap_batch), ctx);
  Tensor noisy = z.value();
  add_channel_noise(noisy, sched, rng);
  // w = noisy - z enters as a constant, so dL/dz passes straight through.
  Tensor w = noisy;
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= z.value()[i];
  auto y = nc::add_constant(tape, z, w);
  auto logits = mcnet.forward(tape, y, ctx, true);
  auto loss = nc::softmax_cross_entropy(tape, logits, labels);
  const double value = loss.value()[0];
  if (std::isfinite(value)) tape.backward(loss);
  return value;
}

EvalLoss evaluate_joint(Model& sscnet, Model& mcnet, const Features& f, std::span<const std::size_t> idx,
                        const SnrSchedule& sched, std::uint64_t noise_seed) {
  nc::Rng rng(noise_seed);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < idx.size(); start += kEvalBatch) {
    const auto part = idx.subspan(start, std::min(kEvalBatch, idx.size() - start));
    Tensor z = models::encode(sscnet, gather(f, part));
    add_channel_noise(z, sched, rng);
    Tape tape(false);
    ForwardContext ctx;
    const auto labels = gather_labels(f, part);
    auto logits = mcnet.forward(tape, tape.constant(z), ctx, true);
    loss += nc::softmax_cross_entropy(tape, logits, labels).value()[0] * static_cast<double>(part.size());
    correct += count_correct(logits.value(), labels);
  }
  const auto n = static_cast<double>(std::max<std::size_t>(idx.size(), 1));
  return {loss / n, static_cast<double>(correct) / n};
}

EvalLoss evaluate_direct(Model& model, const Features& f, std::span<const std::size_t> idx) {
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < idx.size(); start += kEvalBatch) {
    const auto part = idx.subspan(start, std::min(kEvalBatch, idx.size() - start));
    Tape tape(false);
    ForwardContext ctx;
    const auto labels = gather_labels(f, part);
    auto logits = model.forward(tape, tape.constant(gather(f, part)), ctx, true);
    loss += nc::softmax_cross_entropy(tape, logits, labels).value()[0] * static_cast<double>(part.size());
    correct += count_correct(logits.value(), labels);
  }
  const auto n = static_cast<double>(std::max<std::size_t>(idx.size(), 1));
  return {loss / n, static_cast<double>(correct) / n};
}

TrainResult train(Model& sscnet, Model& mcnet, const datasetio::Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (sscnet.output_shape() != mcnet.input_shape())
    throw nc::ShapeError("train: encoder output " + nc::shape_str(sscnet.output_shape()) +
                         " does not match classifier input " + nc::shape_str(mcnet.input_shape()));
  if (sscnet.input_shape() != nc::Shape{ds.header.frame_length, 2})
    throw nc::ShapeError("train: encoder expects " + nc::shape_str(sscnet.input_shape()) +
                         " frames, dataset has length " + std::to_string(ds.header.frame_length));
  if (mcnet.output_shape() != nc::Shape{ds.header.class_names.size()})
    throw nc::ShapeError("train: classifier has " + nc::shape_str(mcnet.output_shape()) + " outputs, dataset has " +
                         std::to_string(ds.header.class_names.size()) + " classes");
  if (cfg.reinit) {
    sscnet.init(cfg.seed);
    mcnet.init(cfg.seed + 1);
  }
  const Features f = extract_features(ds);
  auto all = sscnet.params();
  for (auto* p : mcnet.params()) all.push_back(p);
  auto trainable = sscnet.trainable_params();
  for (auto* p : mcnet.trainable_params()) trainable.push_back(p);
  const Mode mode = cfg.frozen ? Mode::Infer : Mode::Train;
  const std::uint64_t val_seed = validation_noise_seed(cfg.seed);

  return run_epochs(
      all, trainable, f, ds, cfg,
      [&](const Tensor& x, const std::vector<int>& labels, nc::Rng& rng) {
        return joint_backward(sscnet, mcnet, x, labels, cfg.schedule, rng, mode);
      },
      [&](const std::vector<std::size_t>& val) { return evaluate_joint(sscnet, mcnet, f, val, cfg.schedule, val_seed); });
}

TrainResult train_direct(Model& model, const datasetio::Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (model.input_shape() != nc::Shape{ds.header.frame_length, 2})
    throw nc::ShapeError("train_direct: model expects " + nc::shape_str(model.input_shape()) +
                         " frames, dataset has length " + std::to_string(ds.header.frame_length));
  if (model.output_shape() != nc::Shape{ds.header.class_names.size()})
    throw nc::ShapeError("train_direct: model has " + nc::shape_str(model.output_shape()) + " outputs, dataset has " +
                         std::to_string(ds.header.class_names.size()) + " classes");
  if (cfg.reinit) model.init(cfg.seed);
  const Features f = extract_features(ds);
  const Mode mode = cfg.frozen ? Mode::Infer : Mode::Train;

  return run_epochs(
      model.params(), model.trainable_params(), f, ds, cfg,
      [&](const Tensor& x, const std::vector<int>& labels, nc::Rng& rng) {
        Tape tape;
        ForwardContext ctx{mode, &rng};
        auto logits = model.forward(tape, tape.constant(x), ctx, true);
        auto loss = nc::softmax_cross_entropy(tape, logits, labels);
        const double value = loss.value()[0];
        if (std::isfinite(value)) tape.backward(loss);
        return value;
      },
      [&](const std::vector<std::size_t>& val) { return evaluate_direct(model, f, val); });
}

std::string history_csv(const TrainHistory& h) {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& e : h.epochs) os << e.epoch << "," << e.train_loss << "," << e.val_loss << "," << e.val_acc << "\n";
  return os.str();
}

}  // namespace camc::train
