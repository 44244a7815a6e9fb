#include "semtrack/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "semtrack/error.hpp"
#include "semtrack/log.hpp"

namespace semtrack {

TrainRecipe TrainRecipe::full_scale() { return TrainRecipe{}; }

namespace {

constexpr std::size_t kFeatureChunk = 128;

int sequence_label(const Sequence& seq, const ModelBundle& model) {
  if (!seq.category) throw Error("sequence '" + seq.name + "' has no category");
  for (const CategoryLabel& l : model.labels) {
    if (l.name == *seq.category) return l.index;
  }
  throw Error("sequence '" + seq.name + "' has category '" + *seq.category + "' unknown to the model");
}

BBox frame_bounds(const FrameImage& f) {
  return BBox::from_corner(0.0, 0.0, static_cast<double>(f.width()), static_cast<double>(f.height()));
}

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  std::shuffle(v.begin(), v.end(), rng);
}

std::vector<int> distinct(std::span<const int> labels) {
  std::vector<int> d(labels.begin(), labels.end());
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  return d;
}

double sgd_batch(nn::Sequential& head, const Tensor& x, std::span<const int> y, double lr, Rng& rng) {
  head.zero_grad();
  nn::Tape tape;
  const Tensor logits = head.forward(x, {true, &rng}, &tape);
  const nn::LossResult loss = nn::softmax_cross_entropy(logits, y);
  head.backward(tape, loss.logit_grad);
  const auto params = head.parameters();
  nn::sgd_step(params, lr);
  return loss.loss;
}

// Cycles through a shuffled permutation, reshuffling when exhausted.
class Cycler {
 public:
  Cycler(std::vector<std::size_t> pool, Rng& rng) : pool_(std::move(pool)), rng_(rng) {}
  bool empty() const { return pool_.empty(); }
  std::size_t next() {
    if (pos_ == 0) shuffle_in_place(pool_, rng_);
    const std::size_t v = pool_[pos_];
    pos_ = (pos_ + 1) % pool_.size();
    return v;
  }

 private:
  std::vector<std::size_t> pool_;
  Rng& rng_;
  std::size_t pos_ = 0;
};

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes, const char* what) {
  if (labels.size() != rows) throw ShapeError(std::string(what) + ": label count differs from feature rows");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw Error(std::string(what) + ": label " + std::to_string(l) + " out of range");
    }
  }
}

}  // namespace

namespace {

// Appends the items of one sequence without shuffling.
void collect_items(TrainDataset& ds, const Sequence& seq, std::size_t si, int label, int x_label,
                   const TrainRecipe& recipe, Rng& rng) {
  if (seq.gt.size() != seq.size()) throw Error("sequence '" + seq.name + "' lacks ground truth");
  for (std::size_t k = 0; k < seq.size(); k += recipe.frame_stride) {
    const FrameImage& frame = seq.frame(k);
    const BBox bounds = frame_bounds(frame);
    std::vector<BBox> pos, neg, bg;
    try {
      OverlapWindow w = recipe.positive_window;
      w.count = recipe.positives;
      if (w.count) pos = sample_by_overlap(seq.gt[k], bounds, w, rng);
      w = recipe.negative_window;
      w.count = recipe.negatives;
      if (w.count) neg = sample_by_overlap(seq.gt[k], bounds, w, rng);
      w.count = recipe.netc_background;
      if (w.count) bg = sample_by_overlap(seq.gt[k], bounds, w, rng);
    } catch (const InfeasibleError& e) {
      ++ds.skipped_frames;
      ds.warnings.push_back(seq.name + " frame " + std::to_string(k) + ": " + e.what());
      log_line(LogLevel::kInfo, "warning: " + ds.warnings.back());
      continue;
    }
    auto add = [&](const BBox& b, int category, int fg) {
      ds.items.push_back({seq.frames[k], b, category, fg, si, k});
      return ds.items.size() - 1;
    };
    for (const BBox& b : pos) {
      const std::size_t i = add(b, label, kForeground);
      ds.netc.push_back(i);
      ds.nett.push_back(i);
    }
    for (const BBox& b : neg) ds.nett.push_back(add(b, x_label, kBackground));
    for (const BBox& b : bg) ds.netc.push_back(add(b, x_label, kBackground));
  }
}

void check_recipe(const TrainRecipe& recipe) {
  if (recipe.positives + recipe.negatives + recipe.netc_background == 0) {
    throw Error("prepare_dataset: recipe requests no samples");
  }
  if (recipe.frame_stride == 0) throw Error("prepare_dataset: frame stride must be positive");
}

void finish_dataset(TrainDataset& ds, Rng& rng) {
  if (ds.items.empty()) throw Error("prepare_dataset: no samples produced");
  shuffle_in_place(ds.netc, rng);
  shuffle_in_place(ds.nett, rng);
}

}  // namespace

TrainDataset prepare_dataset(std::span<const Sequence> sequences, const ModelBundle& model,
                             const TrainRecipe& recipe, Rng& rng) {
  check_recipe(recipe);
  TrainDataset ds;
  for (std::size_t si = 0; si < sequences.size(); ++si) {
    collect_items(ds, sequences[si], si, sequence_label(sequences[si], model), model.category_x().index, recipe, rng);
  }
  finish_dataset(ds, rng);
  return ds;
}

Tensor item_crops(std::span<const TrainItem> items, std::span<const std::size_t> which, std::size_t side) {
  if (which.empty()) throw Error("item_crops: empty selection");
  const std::size_t per = 3 * side * side;
  Tensor out({which.size(), 3, side, side});
  for (std::size_t r = 0; r < which.size(); ++r) {
    const TrainItem& item = items[which[r]];
    const Tensor crop = crop_resize(*item.frame, item.box, side);
    std::copy(crop.data(), crop.data() + per, out.data() + r * per);
  }
  return out;
}

Tensor item_features(const ModelBundle& model, std::span<const TrainItem> items, std::span<const std::size_t> which) {
  const std::size_t d = model.feature_width();
  Tensor out({std::max<std::size_t>(which.size(), 1), d});
  if (which.empty()) throw Error("item_features: empty selection");
  for (std::size_t b = 0; b < which.size(); b += kFeatureChunk) {
    const auto chunk = which.subspan(b, std::min(kFeatureChunk, which.size() - b));
    const Tensor f = forward_shared(model, item_crops(items, chunk, model.config.input_side));
    std::copy(f.data(), f.data() + f.size(), out.data() + b * d);
  }
  return out;
}

FitLog fit_head(nn::Sequential& head, const Tensor& features, std::span<const int> labels,
                const FitOptions& o, Rng& rng) {
  if (features.rank() != 2) throw ShapeError("fit_head: features must be N x D");
  const std::size_t n = features.dim(0);
  check_labels(labels, n, head.output_width(), "fit_head");
  if (o.batch == 0) throw Error("fit_head: batch size must be positive");
  FitLog log;
  std::vector<int> batch_labels;
  std::vector<std::size_t> rows;
  auto step = [&]() {
    batch_labels.clear();
    for (std::size_t r : rows) batch_labels.push_back(labels[r]);
    ++log.iterations;
    return sgd_batch(head, gather_rows(features, rows), batch_labels, o.lr, rng);
  };

  if (o.iterations > 0) {
    std::vector<std::size_t> pos, neg, all(n);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < n; ++i) (labels[i] == 1 ? pos : neg).push_back(i);
    const bool stratify = o.positive_fraction > 0.0 && !pos.empty() && !neg.empty();
    Cycler cpos(pos, rng), cneg(neg, rng), call(all, rng);
    const std::size_t bs = std::min(o.batch, n);
    const std::size_t npos =
        stratify ? std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(o.positive_fraction * bs)), 1, bs - 1) : 0;
    for (std::size_t it = 0; it < o.iterations; ++it) {
      rows.clear();
      if (stratify) {
        for (std::size_t i = 0; i < npos; ++i) rows.push_back(cpos.next());
        for (std::size_t i = npos; i < bs; ++i) rows.push_back(cneg.next());
      } else {
        for (std::size_t i = 0; i < bs; ++i) rows.push_back(call.next());
      }
      log.losses.push_back(step());
    }
    return log;
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t e = 0; e < o.epochs; ++e) {
    shuffle_in_place(perm, rng);
    double total = 0.0;
    for (std::size_t b = 0; b < n; b += o.batch) {
      rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(b),
                  perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + o.batch)));
      total += step() * static_cast<double>(rows.size());
    }
    log.losses.push_back(total / static_cast<double>(n));
  }
  return log;
}

double head_accuracy(const nn::Sequential& head, const Tensor& features, std::span<const int> labels) {
  check_labels(labels, features.dim(0), head.output_width(), "head_accuracy");
  const Tensor logits = head.forward(features);
  const std::size_t k = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = logits.data() + i * k;
    const auto best = static_cast<int>(std::max_element(row, row + k) - row);
    correct += best == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

HeadReport train_netc(ModelBundle& model, const Tensor& features, std::span<const int> labels,
                      const FitOptions& options, Rng& rng) {
  if (distinct(labels).size() < 2) throw Error("train_netc: items must span at least two categories");
  HeadReport r;
  r.name = "net_c";
  r.train_items = labels.size();
  r.holdout_accuracy = std::numeric_limits<double>::quiet_NaN();
  r.log = fit_head(model.net_c, features, labels, options, rng);
  return r;
}

HeadReport train_nett_branch(ModelBundle& model, const CategoryLabel& branch, const Tensor& features,
                             std::span<const int> fg_labels, const FitOptions& options, Rng& rng) {
  const CategoryLabel& l = model.label(branch.name);
  const auto classes = distinct(fg_labels);
  if (classes != std::vector<int>{kBackground, kForeground}) {
    throw Error("train_nett_branch(" + l.name + "): items must contain both foreground and background");
  }
  HeadReport r;
  r.name = "net_t." + l.name;
  r.train_items = fg_labels.size();
  r.holdout_accuracy = std::numeric_limits<double>::quiet_NaN();
  r.log = fit_head(model.net_t[static_cast<std::size_t>(l.index)], features, fg_labels, options, rng);
  return r;
}

FitLog bootstrap_shared(ModelBundle& model, std::span<const TrainItem> items, std::span<const std::size_t> which,
                        const FitOptions& o, Rng& rng) {
  if (which.empty()) throw Error("bootstrap_shared: no items");
  if (o.batch == 0) throw Error("bootstrap_shared: batch size must be positive");
  FitLog log;
  std::vector<std::size_t> perm(which.begin(), which.end());
  std::vector<int> y;
  const std::size_t n = perm.size();
  for (std::size_t e = 0; e < o.epochs; ++e) {
    shuffle_in_place(perm, rng);
    double total = 0.0;
    for (std::size_t b = 0; b < n; b += o.batch) {
      const std::span<const std::size_t> rows(perm.data() + b, std::min(o.batch, n - b));
      y.clear();
      for (std::size_t r : rows) y.push_back(items[r].category);
      Tensor crops = item_crops(items, rows, model.config.input_side);
      standardize_samples(crops);
      model.net_s.zero_grad();
      model.net_c.zero_grad();
      nn::Tape tape_s, tape_c;
      const Tensor conv = model.net_s.forward(crops, {true, &rng}, &tape_s);
      const Tensor features = conv.reshaped({rows.size(), conv.size() / rows.size()});
      const Tensor logits = model.net_c.forward(features, {true, &rng}, &tape_c);
      const nn::LossResult loss = nn::softmax_cross_entropy(logits, y);
      const Tensor g = model.net_c.backward(tape_c, loss.logit_grad);
      model.net_s.backward(tape_s, g.reshaped(conv.shape()));
      auto params = model.net_s.parameters();
      for (nn::LayerParams* p : model.net_c.parameters()) params.push_back(p);
      nn::sgd_step(params, o.lr);
      total += loss.loss * static_cast<double>(rows.size());
      ++log.iterations;
    }
    log.losses.push_back(total / static_cast<double>(n));
    log_line(LogLevel::kInfo, "bootstrap epoch " + std::to_string(e + 1) + " loss " + std::to_string(log.losses.back()));
  }
  return log;
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.model.linear_init_stddev = 0.1;
  c.recipe.positives = 16;
  c.recipe.negatives = 32;
  c.recipe.frame_stride = 8;
  c.holdout_per_category = 5;
  c.bootstrap = {0.05, 32, 8};
  return c;
}

namespace {

void apply_fit(const KvConfig& kv, const std::string& prefix, FitOptions& o) {
  kv.get(prefix + ".lr", o.lr);
  kv.get(prefix + ".batch", o.batch);
  kv.get(prefix + ".epochs", o.epochs);
}

}  // namespace

void TrainConfig::apply(const KvConfig& kv) {
  kv.get("model.categories", model.categories);
  kv.get("model.category_x", model.category_x_name);
  kv.get("model.input_side", model.input_side);
  kv.get("model.conv1_channels", model.conv_channels[0]);
  kv.get("model.conv2_channels", model.conv_channels[1]);
  kv.get("model.conv3_channels", model.conv_channels[2]);
  kv.get("model.hidden_c", model.hidden_c);
  kv.get("model.hidden_t", model.hidden_t);
  kv.get("model.dropout", model.dropout_rate);
  kv.get("model.init_stddev", model.linear_init_stddev);
  kv.get("train.positives", recipe.positives);
  kv.get("train.negatives", recipe.negatives);
  kv.get("train.netc_background", recipe.netc_background);
  kv.get("train.frame_stride", recipe.frame_stride);
  kv.get("train.holdout_per_category", holdout_per_category);
  kv.get("train.bootstrap_items", bootstrap_items);
  apply_fit(kv, "train.bootstrap", bootstrap);
  apply_fit(kv, "train.netc", netc);
  apply_fit(kv, "train.nett", nett);
}

namespace {

nlohmann::ordered_json fit_json(const FitLog& log) {
  return {{"iterations", log.iterations}, {"epoch_loss", log.losses}};
}

nlohmann::ordered_json head_json(const HeadReport& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["train_items"] = r.train_items;
  j["holdout_items"] = r.holdout_items;
  j["holdout_accuracy"] = r.holdout_accuracy;
  j["iterations"] = r.log.iterations;
  j["epoch_loss"] = r.log.losses;
  j["final_loss"] = r.log.losses.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.log.losses.back());
  return j;
}

}  // namespace

nlohmann::ordered_json TrainReport::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["train_sequences"] = train_sequences;
  j["holdout_sequences"] = holdout_sequences;
  j["netc_items"] = netc_items;
  j["nett_items"] = nett_items;
  j["skipped_frames"] = skipped_frames;
  j["warnings"] = warnings;
  j["bootstrap"] = fit_json(bootstrap);
  j["net_c"] = head_json(netc);
  j["net_t"] = nlohmann::ordered_json::array();
  for (const HeadReport& b : branches) j["net_t"].push_back(head_json(b));
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(net_s_checksum));
  j["net_s_checksum"] = hex;
  return j;
}

SequenceSource SequenceSource::from(std::span<const Sequence> sequences) {
  SequenceSource src;
  for (const Sequence& seq : sequences) {
    if (!seq.category) throw Error("sequence '" + seq.name + "' has no category");
    src.categories.push_back(*seq.category);
  }
  src.load = [sequences](std::size_t i) { return sequences[i]; };
  return src;
}

ModelBundle train_offline(const SequenceSource& source, const TrainConfig& config, TrainReport& report) {
  ModelConfig mc = config.model;
  mc.seed = config.seed;
  ModelBundle model = build_model(mc);
  check_recipe(config.recipe);

  // Split by category; the last sequences of each category are held out.
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < source.size(); ++i) by_label[model.label(source.categories[i]).index].push_back(i);
  for (const CategoryLabel& l : model.labels) {
    if (!by_label.count(l.index)) throw Error("train: no training sequences for category '" + l.name + "'");
  }
  std::vector<std::size_t> train_ids, holdout_ids;
  for (const auto& [label, idx] : by_label) {
    const std::size_t hold = idx.size() > 1 ? std::min(config.holdout_per_category, idx.size() - 1) : 0;
    for (std::size_t j = 0; j < idx.size(); ++j) (j + hold >= idx.size() ? holdout_ids : train_ids).push_back(idx[j]);
  }
  std::sort(train_ids.begin(), train_ids.end());
  std::sort(holdout_ids.begin(), holdout_ids.end());

  report = TrainReport{};
  report.seed = config.seed;
  report.train_sequences = train_ids.size();
  report.holdout_sequences = holdout_ids.size();

  // Item.sequence indexes these label lists.
  std::vector<int> train_labels, holdout_labels;
  Rng data_rng = make_rng(config.seed, "train-dataset");
  auto build = [&](const std::vector<std::size_t>& ids, std::vector<int>& labels) {
    TrainDataset ds;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      const Sequence seq = source.load(ids[j]);
      if (!seq.category || *seq.category != source.categories[ids[j]]) {
        throw Error("train: sequence '" + seq.name + "' does not match its declared category");
      }
      labels.push_back(sequence_label(seq, model));
      collect_items(ds, seq, j, labels.back(), model.category_x().index, config.recipe, data_rng);
    }
    if (!ids.empty()) finish_dataset(ds, data_rng);
    return ds;
  };
  const TrainDataset train = build(train_ids, train_labels);
  const TrainDataset holdout = build(holdout_ids, holdout_labels);
  report.netc_items = train.netc.size();
  report.nett_items = train.nett.size();
  report.skipped_frames = train.skipped_frames + holdout.skipped_frames;
  report.warnings = train.warnings;
  report.warnings.insert(report.warnings.end(), holdout.warnings.begin(), holdout.warnings.end());
  log_line(LogLevel::kInfo, "train: " + std::to_string(train.items.size()) + " items from " +
                                std::to_string(train_ids.size()) + " sequences");

  // Joint bootstrap on a prefix of the shuffled NetC items; NetS is frozen afterwards.
  {
    Rng rng = make_rng(config.seed, "train-bootstrap");
    const std::size_t count = std::min(config.bootstrap_items, train.netc.size());
    report.bootstrap = bootstrap_shared(model, train.items, std::span(train.netc).first(count), config.bootstrap, rng);
  }
  const std::uint64_t frozen = model.net_s.checksum();

  std::vector<std::size_t> all(train.items.size());
  std::iota(all.begin(), all.end(), 0);
  const Tensor features = item_features(model, train.items, all);
  Tensor holdout_features;
  if (!holdout.items.empty()) {
    std::vector<std::size_t> h(holdout.items.size());
    std::iota(h.begin(), h.end(), 0);
    holdout_features = item_features(model, holdout.items, h);
  }
  auto select = [](const TrainDataset& ds, const Tensor& f, std::span<const std::size_t> which, auto label_of,
                   auto keep) {
    std::vector<std::size_t> rows;
    std::vector<int> labels;
    for (std::size_t i : which) {
      if (!keep(ds.items[i])) continue;
      rows.push_back(i);
      labels.push_back(label_of(ds.items[i]));
    }
    return std::pair{rows.empty() ? Tensor() : gather_rows(f, rows), labels};
  };
  const auto category_of = [](const TrainItem& it) { return it.category; };
  const auto fg_of = [](const TrainItem& it) { return it.fg_label; };
  const auto any = [](const TrainItem&) { return true; };

  {
    Rng rng = make_rng(config.seed, "train-netc");
    auto [x, y] = select(train, features, train.netc, category_of, any);
    report.netc = train_netc(model, x, y, config.netc, rng);
    if (!holdout.netc.empty()) {
      auto [hx, hy] = select(holdout, holdout_features, holdout.netc, category_of, any);
      report.netc.holdout_items = hy.size();
      report.netc.holdout_accuracy = head_accuracy(model.net_c, hx, hy);
    }
    log_line(LogLevel::kInfo, "net_c holdout accuracy " + std::to_string(report.netc.holdout_accuracy));
  }

  for (const CategoryLabel& l : model.labels) {
    Rng rng = make_rng(config.seed, "train-nett/" + l.name);
    auto [x, y] = select(train, features, train.nett, fg_of,
                         [&](const TrainItem& it) { return train_labels[it.sequence] == l.index; });
    HeadReport r = train_nett_branch(model, l, x, y, config.nett, rng);
    if (!holdout.nett.empty()) {
      auto [hx, hy] = select(holdout, holdout_features, holdout.nett, fg_of,
                             [&](const TrainItem& it) { return holdout_labels[it.sequence] == l.index; });
      if (!hy.empty()) {
        r.holdout_items = hy.size();
        r.holdout_accuracy = head_accuracy(model.net_t[static_cast<std::size_t>(l.index)], hx, hy);
      }
    }
    log_line(LogLevel::kInfo, r.name + " holdout accuracy " + std::to_string(r.holdout_accuracy));
    report.branches.push_back(std::move(r));
  }

  if (model.net_s.checksum() != frozen) throw Error("train: shared trunk changed after bootstrap");
  report.net_s_checksum = frozen;
  return model;
}

}  // namespace semtrack
