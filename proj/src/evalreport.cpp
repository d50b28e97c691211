// SPDX-License-Identifier: Apache-2.0
#include "camc/evalreport.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "camc/channel.hpp"

namespace camc::eval {

namespace {

constexpr std::size_t kBatch = 500;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string format_r(double r) { return fmt("%g", r); }

bool same_snr(double a, double b) { return a == b || (std::isinf(a) && std::isinf(b) && (a > 0) == (b > 0)); }

std::vector<std::size_t> in_bin(const Features& f, std::span<const std::size_t> test, int snr) {
  std::vector<std::size_t> out;
  for (auto i : test)
    if (f.snr_db[i] == snr) out.push_back(i);
  return out;
}

// Predicted labels for frames in `idx`, batched in index order.
std::vector<std::size_t> predict_labels(Classifier& c, const Features& f, std::span<const std::size_t> idx,
                                        double tx_snr, nc::Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (std::size_t start = 0; start < idx.size(); start += kBatch) {
    const auto part = idx.subspan(start, std::min(kBatch, idx.size() - start));
    const Tensor p = c.predict(f, part, tx_snr, rng);
    const std::size_t m = p.dim(1);
    for (std::size_t r = 0; r < part.size(); ++r) out.push_back(models::argmax(p.span().subspan(r * m, m)));
  }
  return out;
}

AccuracyCell evaluate_cell(Classifier& c, const Features& f, std::span<const std::size_t> idx, int sensing,
                           double tx, std::uint64_t seed) {
  nc::Rng rng(cell_seed(seed, sensing, tx));
  const auto pred = predict_labels(c, f, idx, tx, rng);
  AccuracyCell cell;
  cell.model = c.id();
  cell.r = c.compression_rate();
  cell.sensing_snr_db = sensing;
  cell.transmission_snr_db = tx;
  cell.count = idx.size();
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (static_cast<int>(pred[i]) == f.labels[idx[i]]) ++cell.correct;
  return cell;
}

// Piecewise-linear approximation of the viridis colour map on [0, 1].
std::string colour(double v) {
  static constexpr std::array<std::array<double, 3>, 5> stops{{
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  v = std::clamp(v, 0.0, 1.0) * static_cast<double>(stops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(v), stops.size() - 2);
  const double t = v - static_cast<double>(i);
  char buf[8];
  int rgb[3];
  for (int k = 0; k < 3; ++k) rgb[k] = static_cast<int>(std::lround(stops[i][k] + t * (stops[i + 1][k] - stops[i][k])));
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw EvalError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw EvalError(path.string() + ": write failed");
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

// ---- classifiers -------------------------------------------------------------

SplitClassifier::SplitClassifier(models::Model& sscnet, models::Model& mcnet, std::string id)
    : sscnet_(sscnet), mcnet_(mcnet), id_(std::move(id)) {
  if (sscnet.output_shape() != mcnet.input_shape())
    throw nc::ShapeError("split classifier: encoder output " + nc::shape_str(sscnet.output_shape()) +
                         " does not match classifier input " + nc::shape_str(mcnet.input_shape()));
}

double SplitClassifier::compression_rate() const {
  return models::compression_rate(sscnet_.input_shape().at(0), sscnet_.output_shape().at(0));
}

Tensor SplitClassifier::predict(const Features& f, std::span<const std::size_t> idx, double transmission_snr_db,
                                nc::Rng& rng) {
  Tensor z = models::encode(sscnet_, train::gather(f, idx));
  if (!std::isinf(transmission_snr_db)) train::add_channel_noise(z, train::SnrSchedule::fixed(transmission_snr_db), rng);
  return models::classify(mcnet_, z);
}

Tensor DirectClassifier::predict(const Features& f, std::span<const std::size_t> idx, double, nc::Rng&) {
  models::Tape tape(false);
  models::ForwardContext ctx;
  return model_.forward(tape, tape.constant(train::gather(f, idx)), ctx).value();
}

// ---- tables ------------------------------------------------------------------

const AccuracyCell* AccuracyTable::find(const std::string& model, double r, int sensing_snr_db,
                                        double transmission_snr_db) const {
  for (const auto& c : cells)
    if (c.model == model && c.r == r && c.sensing_snr_db == sensing_snr_db &&
        same_snr(c.transmission_snr_db, transmission_snr_db))
      return &c;
  return nullptr;
}

std::optional<double> AccuracyTable::mean_accuracy(const std::string& model, double r, double transmission_snr_db,
                                                   int min_sensing_db) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : cells)
    if (c.model == model && c.r == r && same_snr(c.transmission_snr_db, transmission_snr_db) &&
        c.sensing_snr_db >= min_sensing_db) {
      sum += c.accuracy();
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

void AccuracyTable::append(const AccuracyTable& other) {
  cells.insert(cells.end(), other.cells.begin(), other.cells.end());
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts)
    for (auto v : row) n += v;
  return n;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
  return n;
}

double ConfusionMatrix::accuracy() const {
  const auto t = total();
  return t == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(t);
}

std::uint64_t cell_seed(std::uint64_t seed, int sensing_snr_db, double transmission_snr_db) {
  const std::uint64_t tx_key =
      std::isinf(transmission_snr_db) ? 0x7fffull : static_cast<std::uint64_t>(std::llround(transmission_snr_db * 16.0));
  std::uint64_t z = seed ^ (static_cast<std::uint64_t>(static_cast<std::int64_t>(sensing_snr_db)) << 32) ^ tx_key;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

AccuracyTable accuracy_vs_snr(Classifier& c, const Features& f, std::span<const std::size_t> test,
                              std::span<const int> sensing_snrs, double transmission_snr_db, std::uint64_t seed) {
  AccuracyTable t;
  for (int snr : sensing_snrs) {
    const auto idx = in_bin(f, test, snr);
    if (idx.empty()) continue;
    t.cells.push_back(evaluate_cell(c, f, idx, snr, transmission_snr_db, seed));
  }
  return t;
}

ConfusionMatrix confusion_matrix(Classifier& c, const Features& f, std::span<const std::size_t> test,
                                 const std::vector<std::string>& class_names, int sensing_snr_db,
                                 double transmission_snr_db, std::uint64_t seed) {
  const auto idx = in_bin(f, test, sensing_snr_db);
  if (idx.empty()) throw EvalError("no test frames at sensing SNR " + std::to_string(sensing_snr_db) + " dB");
  nc::Rng rng(cell_seed(seed, sensing_snr_db, transmission_snr_db));
  const auto pred = predict_labels(c, f, idx, transmission_snr_db, rng);
  ConfusionMatrix m;
  m.model = c.id();
  m.class_names = class_names;
  m.sensing_snr_db = sensing_snr_db;
  m.transmission_snr_db = transmission_snr_db;
  const std::size_t k = class_names.size();
  m.counts.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto truth = static_cast<std::size_t>(f.labels[idx[i]]);
    if (truth >= k || pred[i] >= k) throw EvalError("label outside the class table");
    ++m.counts[truth][pred[i]];
  }
  return m;
}

AccuracyTable sweep_snr_grid(Classifier& c, const Features& f, std::span<const std::size_t> test,
                             std::span<const int> sensing_snrs, std::span<const double> transmission_snrs,
                             std::uint64_t seed) {
  AccuracyTable t;
  for (double tx : transmission_snrs) t.append(accuracy_vs_snr(c, f, test, sensing_snrs, tx, seed));
  return t;
}

std::size_t embedding_for_rate(std::size_t frame_length, double r) {
  if (!(r > 1.0) || !std::isfinite(r))
    throw std::invalid_argument("compression rate must be finite and > 1, got " + format_r(r));
  const double n = 2.0 * static_cast<double>(frame_length) / r;
  if (n < 1.0 || n != std::floor(n))
    throw std::invalid_argument("compression rate " + format_r(r) + " gives non-integer N = 2L/r = " + fmt("%g", n) +
                                " for L = " + std::to_string(frame_length));
  return static_cast<std::size_t>(n);
}

AccuracyTable sweep_compression(const datasetio::Dataset& ds, std::span<const double> rates,
                                const train::TrainConfig& cfg, std::span<const int> sensing_snrs,
                                double transmission_snr_db, std::uint64_t eval_seed,
                                std::vector<CompressionRun>* runs) {
  const std::size_t len = ds.header.frame_length, classes = ds.header.class_names.size();
  std::vector<std::size_t> dims;
  for (double r : rates) dims.push_back(embedding_for_rate(len, r));
  const Features f = train::extract_features(ds);
  AccuracyTable t;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    auto sscnet = models::build_sscnet(len, dims[i]);
    auto mcnet = models::build_mcnet(dims[i], classes);
    auto result = train::train(sscnet, mcnet, ds, cfg);
    SplitClassifier c(sscnet, mcnet);
    t.append(accuracy_vs_snr(c, f, result.split.test, sensing_snrs, transmission_snr_db, eval_seed));
    if (runs != nullptr) runs->push_back({rates[i], dims[i], std::move(result.history)});
  }
  return t;
}

// ---- emission ----------------------------------------------------------------

std::string format_snr(double snr_db) {
  if (std::isinf(snr_db)) return snr_db > 0 ? "inf" : "-inf";
  return fmt("%g", snr_db);
}

std::string accuracy_csv(const AccuracyTable& t) {
  std::string out = "model,r,sensing_snr_db,transmission_snr_db,count,correct,accuracy\n";
  for (const auto& c : t.cells) {
    out += c.model + "," + format_r(c.r) + "," + std::to_string(c.sensing_snr_db) + "," +
           format_snr(c.transmission_snr_db) + "," + std::to_string(c.count) + "," + std::to_string(c.correct) + "," +
           fmt("%.6f", c.accuracy()) + "\n";
  }
  return out;
}

std::string confusion_csv(const ConfusionMatrix& m) {
  std::string out = "true\\predicted";
  for (const auto& n : m.class_names) out += "," + n;
  out += "\n";
  for (std::size_t i = 0; i < m.counts.size(); ++i) {
    out += m.class_names[i];
    for (auto v : m.counts[i]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

std::string accuracy_svg(const AccuracyTable& t, const std::string& title) {
  constexpr double W = 640, H = 420, left = 60, right = 170, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;

  using Key = std::tuple<std::string, double, double>;
  std::vector<Key> order;
  std::map<Key, std::vector<std::pair<int, double>>> series;
  int xmin = 0, xmax = 0;
  bool first = true;
  for (const auto& c : t.cells) {
    // +inf sorts after every finite SNR in the tuple ordering
    const Key k{c.model, c.r, c.transmission_snr_db};
    if (!series.count(k)) order.push_back(k);
    series[k].emplace_back(c.sensing_snr_db, c.accuracy());
    xmin = first ? c.sensing_snr_db : std::min(xmin, c.sensing_snr_db);
    xmax = first ? c.sensing_snr_db : std::max(xmax, c.sensing_snr_db);
    first = false;
  }
  if (xmax == xmin) {
    xmin -= 1;
    xmax += 1;
  }
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (1.0 - y) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
  for (int i = 0; i <= 10; i += 2) {
    const double y = py(i / 10.0);
    os << "<line x1=\"" << left << "\" y1=\"" << fmt("%.2f", y) << "\" x2=\"" << left + pw << "\" y2=\""
       << fmt("%.2f", y) << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << fmt("%.2f", y + 4) << "\" text-anchor=\"end\">"
       << fmt("%.1f", i / 10.0) << "</text>\n";
  }
  for (int x = xmin; x <= xmax; ++x) {
    if ((x - xmin) % 4 != 0 && x != xmax) continue;
    os << "<text x=\"" << fmt("%.2f", px(x)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << x
       << "</text>\n";
  }
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">sensing SNR (dB)</text>\n";
  os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << top + ph / 2 << ")\">accuracy</text>\n";

  for (std::size_t s = 0; s < order.size(); ++s) {
    auto pts = series[order[s]];
    std::sort(pts.begin(), pts.end());
    const char* col = kPalette[s % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      os << (i ? " " : "") << fmt("%.2f", px(pts[i].first)) << "," << fmt("%.2f", py(pts[i].second));
    os << "\"/>\n";
    const auto& [model, r, tx] = order[s];
    std::string label = model;
    if (r > 0) label += " r=" + format_r(r);
    label += " tx=" + format_snr(tx);
    const double ly = top + 10 + 18.0 * static_cast<double>(s);
    os << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << ly
       << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << escape(label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string grid_svg(const AccuracyTable& t, const std::string& title) {
  std::set<int> xs;
  std::set<double> ys;
  std::map<std::pair<int, double>, double> acc;
  if (!t.cells.empty()) {
    const auto& model = t.cells.front().model;
    const double r = t.cells.front().r;
    for (const auto& c : t.cells) {
      if (c.model != model || c.r != r) continue;
      xs.insert(c.sensing_snr_db);
      ys.insert(c.transmission_snr_db);
      acc[{c.sensing_snr_db, c.transmission_snr_db}] = c.accuracy();
    }
  }
  constexpr double cell = 32, left = 70, top = 50;
  const double W = left + cell * static_cast<double>(xs.size()) + 90;
  const double H = top + cell * static_cast<double>(ys.size()) + 60;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << " " << H << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
  std::size_t xi = 0;
  for (int x : xs) {
    const double cx = left + cell * static_cast<double>(xi);
    os << "<text x=\"" << cx + cell / 2 << "\" y=\"" << top + cell * static_cast<double>(ys.size()) + 14
       << "\" text-anchor=\"middle\">" << x << "</text>\n";
    std::size_t yi = 0;
    // highest transmission SNR on top
    for (auto it = ys.rbegin(); it != ys.rend(); ++it, ++yi) {
      const auto found = acc.find({x, *it});
      if (found == acc.end()) continue;
      const double cy = top + cell * static_cast<double>(yi);
      os << "<rect x=\"" << cx << "\" y=\"" << cy << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
         << colour(found->second) << "\"/>\n";
      os << "<text x=\"" << cx + cell / 2 << "\" y=\"" << cy + cell / 2 + 3 << "\" text-anchor=\"middle\" fill=\""
         << (found->second > 0.6 ? "black" : "white") << "\">" << fmt("%.0f", 100 * found->second) << "</text>\n";
    }
    ++xi;
  }
  std::size_t yi = 0;
  for (auto it = ys.rbegin(); it != ys.rend(); ++it, ++yi)
    os << "<text x=\"" << left - 6 << "\" y=\"" << top + cell * static_cast<double>(yi) + cell / 2 + 3
       << "\" text-anchor=\"end\">" << format_snr(*it) << "</text>\n";
  os << "<text x=\"" << left + cell * static_cast<double>(xs.size()) / 2 << "\" y=\"" << H - 14
     << "\" text-anchor=\"middle\">sensing SNR (dB)</text>\n";
  os << "<text x=\"14\" y=\"" << top + cell * static_cast<double>(ys.size()) / 2
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << top + cell * static_cast<double>(ys.size()) / 2
     << ")\">transmission SNR (dB)</text>\n";
  // colour bar, fixed [0, 1]
  const double bx = left + cell * static_cast<double>(xs.size()) + 30;
  for (int i = 0; i < 10; ++i)
    os << "<rect x=\"" << bx << "\" y=\"" << top + 18.0 * (9 - i) << "\" width=\"16\" height=\"18\" fill=\""
       << colour((i + 0.5) / 10.0) << "\"/>\n";
  os << "<text x=\"" << bx + 20 << "\" y=\"" << top + 8 << "\">1.0</text>\n";
  os << "<text x=\"" << bx + 20 << "\" y=\"" << top + 180 << "\">0.0</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string confusion_svg(const ConfusionMatrix& m, const std::string& title) {
  const std::size_t k = m.class_names.size();
  constexpr double cell = 40, left = 90, top = 50;
  const double W = left + cell * static_cast<double>(k) + 40;
  const double H = top + cell * static_cast<double>(k) + 90;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << " " << H << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t row = 0;
    for (auto v : m.counts[i]) row += v;
    const double cy = top + cell * static_cast<double>(i);
    os << "<text x=\"" << left - 6 << "\" y=\"" << cy + cell / 2 + 3 << "\" text-anchor=\"end\">"
       << escape(m.class_names[i]) << "</text>\n";
    for (std::size_t j = 0; j < k; ++j) {
      const double v = row == 0 ? 0.0 : static_cast<double>(m.counts[i][j]) / static_cast<double>(row);
      const double cx = left + cell * static_cast<double>(j);
      os << "<rect x=\"" << cx << "\" y=\"" << cy << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
         << colour(v) << "\"/>\n";
      os << "<text x=\"" << cx + cell / 2 << "\" y=\"" << cy + cell / 2 + 3 << "\" text-anchor=\"middle\" fill=\""
         << (v > 0.6 ? "black" : "white") << "\">" << fmt("%.2f", v) << "</text>\n";
    }
  }
  for (std::size_t j = 0; j < k; ++j) {
    const double cx = left + cell * static_cast<double>(j) + cell / 2;
    const double cy = top + cell * static_cast<double>(k) + 8;
    os << "<text x=\"" << cx << "\" y=\"" << cy << "\" text-anchor=\"end\" transform=\"rotate(-60 " << cx << " " << cy
       << ")\">" << escape(m.class_names[j]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw EvalError(dir.string() + ": cannot create directory: " + ec.message());
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& text) {
    const auto path = dir / name;
    write_file(path, text);
    written.push_back(path);
  };
  for (const auto& c : report.curves) {
    put(c.name + ".csv", accuracy_csv(c.table));
    put(c.name + ".svg", accuracy_svg(c.table, c.name));
  }
  for (const auto& g : report.grids) {
    put(g.name + ".csv", accuracy_csv(g.table));
    put(g.name + ".svg", grid_svg(g.table, g.name));
  }
  for (const auto& m : report.matrices) {
    const std::string stem = "confusion_" + m.model + "_" + std::to_string(m.sensing_snr_db) + "dB";
    put(stem + ".csv", confusion_csv(m));
    put(stem + ".svg", confusion_svg(m, m.model + " at " + std::to_string(m.sensing_snr_db) + " dB"));
  }
  return written;
}

}  // namespace camc::eval
