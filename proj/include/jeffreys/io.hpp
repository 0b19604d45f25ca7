#pragma once

// File formats.
//
// Parameters (text, versioned). Field order:
//   jeffreys-params v1
//   input_dim <int>
//   hidden_dims <count> <dims...>
//   embed_dim <int>
//   num_classes <int>
//   activation <relu|tanh>
//   layer <index> weight <rows> <cols>    followed by rows*cols values, row-major
//   layer <index> bias <size>             followed by size values
//   ... one weight/bias pair per layer, hidden layers first ...
//   class_weights <rows> <cols>           followed by rows*cols values, row-major
//   end
// Values are printed with 17 significant digits, so a round trip is exact.
//
// CSV formats (header line first):
//   dataset:      id,label,domain,f0,f1,...
//   trials:       utt_a,utt_b,is_target
//   loss history: epoch,ce,ls_term,entropy_term,total
//   DET curve:    threshold,p_fa,p_miss
//   scores:       score,is_target

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "jeffreys/dataset.hpp"
#include "jeffreys/errors.hpp"
#include "jeffreys/scoring.hpp"
#include "jeffreys/synth_data.hpp"
#include "jeffreys/trainer.hpp"

namespace jeffreys::io {

inline constexpr const char* kParamsMagic = "jeffreys-params";
inline constexpr int kParamsVersion = 1;

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return {buf, res.ptr};
}

inline double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw IoError("not a number: '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw IoError("not an integer: '" + s + "'");
  return v;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return in;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// ---- parameters ------------------------------------------------------------

inline void write_params(std::ostream& out, const NetworkParams& p) {
  const NetworkSpec& s = p.spec;
  out << kParamsMagic << " v" << kParamsVersion << "\n";
  out << "input_dim " << s.input_dim << "\n";
  out << "hidden_dims " << s.hidden_dims.size();
  for (int h : s.hidden_dims) out << " " << h;
  out << "\n";
  out << "embed_dim " << s.embed_dim << "\n";
  out << "num_classes " << s.num_classes << "\n";
  out << "activation " << to_string(s.activation) << "\n";
  auto dump = [&out](const double* data, Eigen::Index n, Eigen::Index cols) {
    for (Eigen::Index i = 0; i < n; ++i) {
      out << format_double(data[i]) << ((i + 1) % cols == 0 ? "\n" : " ");
    }
  };
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& w = p.layers[l].weight;
    out << "layer " << l << " weight " << w.rows() << " " << w.cols() << "\n";
    dump(w.data(), w.size(), w.cols());
    const auto& b = p.layers[l].bias;
    out << "layer " << l << " bias " << b.size() << "\n";
    dump(b.data(), b.size(), b.size());
  }
  const auto& c = p.class_weights;
  out << "class_weights " << c.rows() << " " << c.cols() << "\n";
  dump(c.data(), c.size(), c.cols());
  out << "end\n";
}

inline NetworkParams read_params(std::istream& in) {
  auto expect = [&in](const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) throw IoError("params: expected '" + word + "', got '" + got + "'");
  };
  auto read_int = [&in]() {
    long long v = 0;
    if (!(in >> v)) throw IoError("params: expected integer");
    return v;
  };
  auto read_values = [&in](double* data, Eigen::Index n) {
    std::string tok;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(in >> tok)) throw IoError("params: truncated tensor");
      data[i] = parse_double(tok);
    }
  };

  expect(kParamsMagic);
  std::string version;
  in >> version;
  if (version != "v" + std::to_string(kParamsVersion)) throw IoError("params: unsupported version " + version);

  NetworkParams p;
  NetworkSpec& s = p.spec;
  expect("input_dim");
  s.input_dim = static_cast<int>(read_int());
  expect("hidden_dims");
  s.hidden_dims.resize(static_cast<std::size_t>(read_int()));
  for (int& h : s.hidden_dims) h = static_cast<int>(read_int());
  expect("embed_dim");
  s.embed_dim = static_cast<int>(read_int());
  expect("num_classes");
  s.num_classes = static_cast<int>(read_int());
  expect("activation");
  std::string act;
  in >> act;
  const auto a = parse_activation(act);
  if (!a) throw IoError("params: unknown activation " + act);
  s.activation = *a;
  s.validate();

  int in_dim = s.input_dim;
  std::vector<int> outs = s.hidden_dims;
  outs.push_back(s.embed_dim);
  for (std::size_t l = 0; l < outs.size(); ++l) {
    expect("layer");
    if (read_int() != static_cast<long long>(l)) throw IoError("params: layer index out of order");
    expect("weight");
    const auto rows = read_int();
    const auto cols = read_int();
    if (rows != outs[l] || cols != in_dim) throw IoError("params: layer shape does not match header");
    DenseLayer layer{Matrix(rows, cols), Vector(rows)};
    read_values(layer.weight.data(), layer.weight.size());
    expect("layer");
    if (read_int() != static_cast<long long>(l)) throw IoError("params: layer index out of order");
    expect("bias");
    if (read_int() != rows) throw IoError("params: bias size mismatch");
    read_values(layer.bias.data(), layer.bias.size());
    p.layers.push_back(std::move(layer));
    in_dim = outs[l];
  }
  expect("class_weights");
  const auto rows = read_int();
  const auto cols = read_int();
  if (rows != s.num_classes || cols != s.embed_dim) throw IoError("params: class weight shape mismatch");
  p.class_weights.resize(rows, cols);
  read_values(p.class_weights.data(), p.class_weights.size());
  expect("end");
  return p;
}

inline void save_params(const std::filesystem::path& path, const NetworkParams& p) {
  auto out = open_out(path);
  write_params(out, p);
}

inline NetworkParams load_params(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_params(in);
}

// ---- CSV -------------------------------------------------------------------

inline void write_dataset_csv(std::ostream& out, const LabeledSet& data) {
  out << "id,label,domain";
  for (int j = 0; j < data.dim(); ++j) out << ",f" << j;
  out << "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << i << "," << data.labels[i] << "," << data.domain;
    for (int j = 0; j < data.dim(); ++j) out << "," << format_double(data.features(static_cast<Eigen::Index>(i), j));
    out << "\n";
  }
}

// Rows must appear with ids 0, 1, 2, ... so that trial indices address rows.
inline LabeledSet read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset: empty file");
  const auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "id" || header[1] != "label" || header[2] != "domain") {
    throw IoError("dataset: bad header");
  }
  const std::size_t dim = header.size() - 3;
  std::vector<std::vector<double>> rows;
  LabeledSet out;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw IoError("dataset: ragged row");
    if (parse_int(f[0]) != static_cast<long long>(rows.size())) throw IoError("dataset: ids must be 0..n-1 in order");
    out.labels.push_back(static_cast<int>(parse_int(f[1])));
    out.domain = f[2];
    std::vector<double> v(dim);
    for (std::size_t j = 0; j < dim; ++j) v[j] = parse_double(f[3 + j]);
    rows.push_back(std::move(v));
  }
  out.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return out;
}

inline void write_trials_csv(std::ostream& out, const TrialList& trials) {
  out << "utt_a,utt_b,is_target\n";
  for (const Trial& t : trials.trials) out << t.a << "," << t.b << "," << (t.is_target ? 1 : 0) << "\n";
}

inline TrialList read_trials_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"utt_a", "utt_b", "is_target"}) {
    throw IoError("trials: bad header");
  }
  TrialList out;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 3) throw IoError("trials: ragged row");
    const auto a = parse_int(f[0]);
    const auto b = parse_int(f[1]);
    const auto t = parse_int(f[2]);
    if (a < 0 || b < 0 || (t != 0 && t != 1)) throw IoError("trials: bad row '" + line + "'");
    out.trials.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(b), t == 1});
  }
  return out;
}

inline void write_loss_csv(std::ostream& out, const std::vector<EpochLoss>& history) {
  out << "epoch,ce,ls_term,entropy_term,total\n";
  for (const auto& e : history) {
    out << e.epoch << "," << format_double(e.loss.ce) << "," << format_double(e.loss.ls_term) << ","
        << format_double(e.loss.entropy_term) << "," << format_double(e.loss.total) << "\n";
  }
}

inline void write_det_csv(std::ostream& out, const DetCurve& curve) {
  out << "threshold,p_fa,p_miss\n";
  for (const auto& p : curve.points) {
    out << format_double(p.threshold) << "," << format_double(p.p_fa) << "," << format_double(p.p_miss) << "\n";
  }
}

inline DetCurve read_det_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"threshold", "p_fa", "p_miss"}) {
    throw IoError("det: bad header");
  }
  DetCurve c;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 3) throw IoError("det: ragged row");
    c.points.push_back({parse_double(f[0]), parse_double(f[1]), parse_double(f[2])});
  }
  return c;
}

inline void write_scores_csv(std::ostream& out, const ScoreSet& s) {
  out << "score,is_target\n";
  for (double v : s.target_scores) out << format_double(v) << ",1\n";
  for (double v : s.nontarget_scores) out << format_double(v) << ",0\n";
}

inline ScoreSet read_scores_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"score", "is_target"}) {
    throw IoError("scores: bad header");
  }
  ScoreSet s;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 2) throw IoError("scores: ragged row");
    (f[1] == "1" ? s.target_scores : s.nontarget_scores).push_back(parse_double(f[0]));
  }
  return s;
}

template <class Writer, class T>
void write_file(const std::filesystem::path& path, Writer&& w, const T& value) {
  auto out = open_out(path);
  w(out, value);
  if (!out) throw IoError("write failed: " + path.string());
}

template <class Reader>
auto read_file(const std::filesystem::path& path, Reader&& r) {
  auto in = open_in(path);
  return r(in);
}

}  // namespace jeffreys::io
