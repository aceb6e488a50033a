#pragma once

// Command-line frontend. `ipd::cli::run` is the whole program; main() only
// forwards argv and the standard streams, so tests drive it in-process.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ipd/ipd.hpp"

namespace ipd::cli {

using Json = nlohmann::ordered_json;

/// Exit codes: 0 success, 2 usage or input error, 3 degenerate data.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitDegenerate = 3;

/// Non-finite doubles have no JSON literal: +/-inf become "inf"/"-inf", NaN null.
inline Json num(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline Json num_array(const std::vector<double>& vs) {
  Json a = Json::array();
  for (double v : vs) a.push_back(num(v));
  return a;
}

/// Serializes with every float at 17 significant digits.
inline void dump_json(std::ostream& os, const Json& j, int indent = 0) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close(static_cast<std::size_t>(indent), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad << Json(it.key()).dump() << ": ";
        dump_json(os, it.value(), indent + 2);
      }
      os << '\n' << close << '}';
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      const bool scalars = std::none_of(j.begin(), j.end(), [](const Json& e) {
        return e.is_object() || e.is_array();
      });
      if (scalars) {
        os << '[';
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) os << ", ";
          dump_json(os, j[i], indent + 2);
        }
        os << ']';
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad;
        dump_json(os, j[i], indent + 2);
      }
      os << '\n' << close << ']';
      return;
    }
    case Json::value_t::number_float:
      os << format_g17(j.get<double>());
      return;
    default:
      os << j.dump();
      return;
  }
}

struct Report {
  std::string command;
  Json parameters = Json::object();
  Json results = Json::object();
  Json warnings = Json::array();
};

struct CommonFlags {
  bool json = false;
  unsigned threads = 0;
  std::string csv_out;
};

inline KnnOptions knn_options(const CommonFlags& f) { return KnnOptions{f.threads, KnnOptions{}.condensed_budget_bytes}; }

inline std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  return out;
}

/// Mean, sample standard deviation, and a normal-approximation 95% interval
/// for the mean of repeated estimates.
inline Json summarize(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  const double half = 1.959963984540054 * sd / std::sqrt(n);
  Json s;
  s["mean"] = num(mean);
  s["std"] = num(sd);
  s["ci95"] = Json::array({num(mean - half), num(mean + half)});
  return s;
}

// ---------------------------------------------------------------------------
// id

struct IdArgs {
  std::string input;
  std::string estimator = "mle";
  std::size_t k = 20;
  double discard = 0.1;
  std::string variant = "linear_fit";
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
};

inline Json estimate_json(const IdEstimate& e) {
  Json j;
  j["value"] = num(e.value);
  j["n_used"] = e.n_used;
  j["n_excluded"] = e.n_excluded;
  if (e.estimator == IdEstimator::TwoNN) j["n_discarded"] = e.n_discarded;
  return j;
}

inline void cmd_id(const IdArgs& a, const CommonFlags& f, Report& rep) {
  rep.parameters = {{"input", a.input},     {"estimator", a.estimator}, {"k", a.k},
                    {"discard", num(a.discard)}, {"variant", a.variant},    {"repeats", a.repeats},
                    {"seed", a.seed},       {"threads", f.threads}};
  const Matrix points = read_ipmx(a.input);
  const auto opts = knn_options(f);
  const bool mle = a.estimator == "mle";
  const TwoNNVariant variant =
      a.variant == "closed_form" ? TwoNNVariant::ClosedForm : TwoNNVariant::LinearFit;
  auto estimate = [&](std::span<const std::size_t> rows) {
    return mle ? mle_id(points, rows, a.k, opts) : twonn_id(points, rows, a.discard, variant, opts);
  };
  if (a.repeats == 0) throw Error(ErrorCode::InvalidArgument, "--repeats must be positive");

  std::vector<IdEstimate> runs;
  if (a.repeats == 1) {
    runs.push_back(estimate(detail::all_rows(points)));
  } else {
    // Bootstrap: draw rows with replacement, collapse repeated draws so the
    // duplicate-exclusion policy only sees genuine duplicates.
    for (std::size_t r = 0; r < a.repeats; ++r) {
      Rng rng(derive_seed(a.seed, r));
      std::set<std::size_t> drawn;
      for (std::size_t i = 0; i < points.rows(); ++i) drawn.insert(rng.below(points.rows()));
      const std::vector<std::size_t> rows(drawn.begin(), drawn.end());
      runs.push_back(estimate(rows));
    }
  }
  rep.results["estimator"] = a.estimator;
  rep.results["rows"] = points.rows();
  rep.results["cols"] = points.cols();
  std::vector<double> values;
  Json per = Json::array();
  std::size_t excluded = 0;
  for (const auto& e : runs) {
    values.push_back(e.value);
    per.push_back(estimate_json(e));
    excluded = std::max(excluded, e.n_excluded);
  }
  if (runs.size() == 1) {
    rep.results.update(estimate_json(runs.front()));
  } else {
    rep.results["repeats"] = per;
    rep.results["values"] = num_array(values);
    rep.results.update(summarize(values));
  }
  if (excluded > 0) {
    rep.warnings.push_back(std::to_string(excluded) +
                           " points excluded: zero distance to a near neighbor (duplicates)");
  }
  if (!f.csv_out.empty()) {
    auto out = open_csv(f.csv_out);
    out << "repeat,value,n_used,n_excluded\n";
    for (std::size_t r = 0; r < runs.size(); ++r) {
      out << r << ',' << format_g17(runs[r].value) << ',' << runs[r].n_used << ','
          << runs[r].n_excluded << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// sharpness

struct SharpnessArgs {
  std::string input;
  std::string labels;
  std::size_t m = 1000;
  std::optional<std::size_t> runs;
  bool multiclass = false;
  std::uint64_t seed = 0;
};

inline void cmd_sharpness(const SharpnessArgs& a, const CommonFlags& f, Report& rep) {
  rep.parameters = {{"input", a.input}, {"labels", a.labels},       {"m", a.m},
                    {"runs", a.runs ? Json(*a.runs) : Json(nullptr)},
                    {"multiclass", a.multiclass}, {"seed", a.seed}, {"threads", f.threads}};
  LabeledDataset data(read_ipmx(a.input), read_labels_csv(a.labels));
  const std::set<Label> classes(data.labels.begin(), data.labels.end());
  if (classes.size() < 2) {
    throw Error(ErrorCode::NotBinary, "labels contain " + std::to_string(classes.size()) + " class");
  }
  const auto opts = knn_options(f);
  SharpnessEstimate est;
  std::string mode;
  if (a.multiclass) {
    mode = "multiclass";
    est = multiclass_sharpness(data, a.m, a.seed, opts);
  } else {
    const std::size_t runs = a.runs.value_or(classes.size() > 2 ? 25 : 1);
    if (classes.size() == 2 && runs == 1) {
      mode = "binary";
      est = label_sharpness(data, a.m, a.seed, opts);
    } else {
      mode = "paired";
      est = paired_sharpness(data, a.m, runs, a.seed, opts);
    }
  }
  rep.results["mode"] = mode;
  rep.results["classes"] = classes.size();
  rep.results["value"] = num(est.value);
  rep.results["m_used"] = est.m_used;
  rep.results["runs"] = est.runs;
  rep.results["per_run_values"] = num_array(est.per_run_values);
  Json pairs = Json::array();
  for (const auto& [x, y] : est.run_pairs) pairs.push_back(Json::array({x, y}));
  rep.results["run_pairs"] = pairs;
  rep.results["infinite_runs"] = est.infinite_runs;
  rep.results["argmax_pair"] = Json::array({est.argmax_pair.first, est.argmax_pair.second});
  if (est.infinite_runs > 0) {
    rep.warnings.push_back(std::to_string(est.infinite_runs) +
                           " run(s) found differently labeled points at zero distance (last: rows " +
                           std::to_string(est.argmax_pair.first) + " and " +
                           std::to_string(est.argmax_pair.second) + ")");
  }
  if (!f.csv_out.empty()) {
    auto out = open_csv(f.csv_out);
    out << "run,class_a,class_b,value\n";
    for (std::size_t r = 0; r < est.per_run_values.size(); ++r) {
      const auto v = est.per_run_values[r];
      out << r << ',' << (r < est.run_pairs.size() ? std::to_string(est.run_pairs[r].first) : "")
          << ',' << (r < est.run_pairs.size() ? std::to_string(est.run_pairs[r].second) : "") << ','
          << (std::isinf(v) ? std::string("inf") : format_g17(v)) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// fit / lratio

inline std::function<std::string(const ScalingRecord&)> group_key(const std::string& column) {
  if (column.empty()) return [](const ScalingRecord&) { return std::string("all"); };
  if (column == "dataset") return [](const ScalingRecord& r) { return r.dataset_id; };
  return [column](const ScalingRecord& r) {
    const auto it = r.tags.find(column);
    if (it == r.tags.end()) throw Error(ErrorCode::InvalidArgument, "no column '" + column + "'");
    return it->second;
  };
}

inline ScalingModel parse_model(const std::string& s) {
  if (s == "a") return ScalingModel::AWithKF;
  if (s == "b") return ScalingModel::BWithoutKF;
  return ScalingModel::Repr;
}

struct FitArgs {
  std::string records;
  std::string model = "a";
  std::string group_by;
};

inline void cmd_fit(const FitArgs& a, const CommonFlags& f, Report& rep) {
  rep.parameters = {{"records", a.records}, {"model", a.model}, {"group_by_column", a.group_by}};
  const auto records = read_scaling_csv(a.records);
  const auto groups = group_records(records, group_key(a.group_by));
  const auto model = parse_model(a.model);
  rep.results["model"] = to_string(model);
  Json out = Json::array();
  std::vector<std::pair<std::string, FitResult>> fits;
  for (const auto& [name, recs] : groups) {
    const auto fit = fit_model(recs, model);
    Json g;
    g["group"] = name;
    g["n_records"] = fit.n_records;
    g["offset"] = num(fit.offset);
    g["offset_log10"] = num(fit.offset / std::log(10.0));
    g["sse"] = num(fit.sse);
    g["residuals"] = num_array(fit.residuals);
    out.push_back(g);
    fits.emplace_back(name, fit);
  }
  rep.results["groups"] = out;
  if (!f.csv_out.empty()) {
    auto csv = open_csv(f.csv_out);
    csv << "group,dataset,N,residual\n";
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& recs = groups[gi].second;
      for (std::size_t i = 0; i < recs.size(); ++i) {
        csv << groups[gi].first << ',' << recs[i].dataset_id << ',' << recs[i].train_size << ','
            << format_g17(fits[gi].second.residuals[i]) << '\n';
      }
    }
  }
}

struct LratioArgs {
  std::string records;
  std::string group_by;
};

inline void cmd_lratio(const LratioArgs& a, const CommonFlags&, Report& rep) {
  rep.parameters = {{"records", a.records}, {"group_by_column", a.group_by}};
  const auto records = read_scaling_csv(a.records);
  Json out = Json::array();
  for (const auto& [name, recs] : group_records(records, group_key(a.group_by))) {
    const auto fa = fit_model_a(recs);
    const auto fb = fit_model_b(recs);
    const double lr = log_likelihood_ratio(fa, fb);
    Json g;
    g["group"] = name;
    g["n_records"] = fa.n_records;
    g["offset_a"] = num(fa.offset);
    g["offset_b"] = num(fb.offset);
    g["sse_a"] = num(fa.sse);
    g["sse_b"] = num(fb.sse);
    g["log_ratio"] = num(lr);
    g["log10_ratio"] = num(lr / std::log(10.0));
    g["preferred"] = lr > 0 ? "A" : (lr < 0 ? "B" : "neither");
    out.push_back(g);
  }
  rep.results["groups"] = out;
}

// ---------------------------------------------------------------------------
// small scalar commands

struct CorrelateArgs {
  std::vector<double> xs, ys;
  std::string csv, x_col, y_col;
};

inline std::vector<double> csv_column(const std::string& path, const std::string& column) {
  const std::string text = detail::slurp(path);
  const auto lines = detail::lines_of(text);
  if (lines.empty()) throw Error(ErrorCode::MissingHeader, path + " is empty");
  const auto header = detail::split_csv(lines[0]);
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) throw Error(ErrorCode::MissingHeader, "no column '" + column + "' in " + path);
  const auto col = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = detail::split_csv(lines[i]);
    const auto v = col < fields.size() ? detail::parse_number<double>(fields[col]) : std::nullopt;
    if (!v) throw Error(ErrorCode::MalformedRow, path + " line " + std::to_string(i + 1));
    out.push_back(*v);
  }
  return out;
}

inline void cmd_correlate(CorrelateArgs a, const CommonFlags&, Report& rep) {
  if (!a.csv.empty()) {
    a.xs = csv_column(a.csv, a.x_col);
    a.ys = csv_column(a.csv, a.y_col);
    rep.parameters = {{"csv", a.csv}, {"x", a.x_col}, {"y", a.y_col}};
  } else {
    rep.parameters = {{"xs", num_array(a.xs)}, {"ys", num_array(a.ys)}};
  }
  const auto r = pearson_r(a.xs, a.ys);
  rep.results["r"] = num(r.r);
  rep.results["n"] = r.n;
}

struct RankArgs {
  std::vector<std::string> tasks;  // name=value
  std::vector<double> kfs;         // auto-named task1, task2, ...
};

inline void cmd_rank_tasks(const RankArgs& a, const CommonFlags&, Report& rep) {
  std::vector<std::pair<std::string, double>> tasks;
  for (const auto& t : a.tasks) {
    const auto eq = t.find('=');
    const auto v = eq == std::string::npos ? std::nullopt
                                           : detail::parse_number<double>(std::string_view(t).substr(eq + 1));
    if (!v) throw Error(ErrorCode::InvalidArgument, "--task expects name=value, got '" + t + "'");
    tasks.emplace_back(t.substr(0, eq), *v);
  }
  for (double k : a.kfs) tasks.emplace_back("task" + std::to_string(tasks.size() + 1), k);
  Json params = Json::array();
  for (const auto& [n, k] : tasks) params.push_back({{"task", n}, {"k_f", num(k)}});
  rep.parameters = {{"tasks", params}};

  const auto ranking = rank_tasks(tasks);
  Json order = Json::array();
  for (const auto& [n, k] : ranking.order) order.push_back(n);
  Json kf = Json::array();
  for (const auto& [n, k] : ranking.order) kf.push_back(num(k));
  Json ratios = Json::array();
  for (const auto& r : ranking.ratios) {
    ratios.push_back({{"numerator", r.numerator}, {"denominator", r.denominator},
                      {"ratio", num(r.ratio)}, {"tie", r.tie}});
  }
  rep.results["order"] = order;
  rep.results["k_f"] = kf;
  rep.results["hardest"] = ranking.order.front().first;
  rep.results["ratios"] = ratios;
}

struct BoundArgs {
  double margin = 0.0;
  double lipschitz = 1.0;
};

inline void cmd_robust_bound(const BoundArgs& a, const CommonFlags&, Report& rep) {
  rep.parameters = {{"margin", num(a.margin)}, {"lipschitz", num(a.lipschitz)}};
  const auto b = robustness_lower_bound(a.margin, a.lipschitz);
  rep.results["lower_bound"] = num(b.lower_bound);
  rep.results["margin"] = num(b.margin);
  rep.results["lipschitz"] = num(b.lipschitz);
}

struct DimsArgs {
  double d_data = 1.0;
  double d_repr = 1.0;
};

inline void cmd_compare_dims(const DimsArgs& a, const CommonFlags&, Report& rep) {
  rep.parameters = {{"d_data", num(a.d_data)}, {"d_repr", num(a.d_repr)}};
  const auto c = compare_dims(a.d_data, a.d_repr);
  rep.results["satisfied"] = c.satisfied;
  rep.results["gap"] = num(c.gap);
  if (!c.satisfied) rep.warnings.push_back("d_repr exceeds d_data");
}

// ---------------------------------------------------------------------------
// synth / synth-records

struct SynthArgs {
  std::string kind = "hypercube";
  std::size_t d = 2;
  std::size_t n = 2;
  std::size_t points = 1000;
  std::string embedding = "axis_aligned";
  std::uint64_t seed = 0;
  std::string output;
  std::string dtype = "f64";
  std::string labels_out;
  std::vector<double> normal;
  std::optional<double> threshold;
  double margin = 0.0;
};

inline IpmxDtype parse_dtype(const std::string& s) { return s == "f32" ? IpmxDtype::F32 : IpmxDtype::F64; }

inline void cmd_synth(const SynthArgs& a, const CommonFlags&, Report& rep) {
  ManifoldSpec spec;
  spec.intrinsic_dim = a.d;
  spec.ambient_dim = a.n;
  spec.kind = a.kind == "hypersphere" ? ManifoldKind::Hypersphere
              : a.kind == "sine_lift" ? ManifoldKind::SineLift
                                      : ManifoldKind::Hypercube;
  spec.embedding = a.embedding == "random_orthogonal" ? Embedding::RandomOrthogonal : Embedding::AxisAligned;
  spec.n_points = a.points;
  spec.seed = a.seed;
  rep.parameters = {{"kind", a.kind},     {"d", a.d},           {"n", a.n},
                    {"points", a.points}, {"embedding", a.embedding}, {"seed", a.seed},
                    {"output", a.output}, {"dtype", a.dtype},   {"labels_out", a.labels_out},
                    {"normal", num_array(a.normal)},
                    {"threshold", a.threshold ? num(*a.threshold) : Json(nullptr)},
                    {"margin", num(a.margin)}};
  Matrix cloud = sample_manifold(spec);
  if (a.labels_out.empty()) {
    write_ipmx(cloud, a.output, parse_dtype(a.dtype));
    rep.results["rows"] = cloud.rows();
    rep.results["cols"] = cloud.cols();
    return;
  }
  std::vector<double> normal = a.normal;
  if (normal.empty()) {
    normal.assign(cloud.cols(), 0.0);
    normal[0] = 1.0;
  }
  if (normal.size() != cloud.cols()) {
    throw Error(ErrorCode::InvalidArgument, "--normal needs " + std::to_string(cloud.cols()) + " entries");
  }
  double threshold = 0.0;
  if (a.threshold) {
    threshold = *a.threshold;
  } else {
    // Median projection, which splits the cloud into balanced classes.
    std::vector<double> proj(cloud.rows());
    for (std::size_t i = 0; i < cloud.rows(); ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < cloud.cols(); ++c) s += normal[c] * cloud(i, c);
      proj[i] = s;
    }
    std::sort(proj.begin(), proj.end());
    threshold = proj.size() % 2 ? proj[proj.size() / 2]
                                : 0.5 * (proj[proj.size() / 2 - 1] + proj[proj.size() / 2]);
  }
  const auto labeled = label_halfspace(cloud, normal, threshold, a.margin);
  write_ipmx(labeled.data.points, a.output, parse_dtype(a.dtype));
  write_labels_csv(labeled.data.labels, a.labels_out);
  const auto ones = static_cast<std::size_t>(
      std::count(labeled.data.labels.begin(), labeled.data.labels.end(), Label{1}));
  rep.results["rows"] = labeled.data.points.rows();
  rep.results["cols"] = labeled.data.points.cols();
  rep.results["threshold"] = num(threshold);
  rep.results["removed"] = cloud.rows() - labeled.data.points.rows();
  rep.results["class_counts"] = Json::array({labeled.data.labels.size() - ones, ones});
}

struct SynthRecordsArgs {
  double a = 0.0;
  std::vector<std::uint64_t> sizes;
  std::vector<double> d_values;
  std::vector<double> kf_values;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
  std::string output;
};

inline void cmd_synth_records(const SynthRecordsArgs& a, const CommonFlags&, Report& rep) {
  rep.parameters = {{"a", num(a.a)},
                    {"sizes", a.sizes},
                    {"d_values", num_array(a.d_values)},
                    {"kf_values", num_array(a.kf_values)},
                    {"noise_sd", num(a.noise_sd)},
                    {"seed", a.seed},
                    {"output", a.output}};
  std::vector<ScalingSpec> specs;
  for (double kf : a.kf_values) {
    for (double d : a.d_values) {
      for (auto n : a.sizes) specs.push_back({n, d, kf});
    }
  }
  const auto records = synth_scaling_records(a.a, specs, a.noise_sd, a.seed);
  write_scaling_csv(records, a.output);
  rep.results["records"] = records.size();
}

// ---------------------------------------------------------------------------
// knn / convert

struct KnnArgs {
  std::string input;
  std::size_t k = 20;
};

inline void cmd_knn(const KnnArgs& a, const CommonFlags& f, Report& rep) {
  rep.parameters = {{"input", a.input}, {"k", a.k}, {"threads", f.threads}};
  const Matrix points = read_ipmx(a.input);
  const auto table = knn_l2(points, a.k, knn_options(f));
  Json dist = Json::array(), idx = Json::array();
  for (std::size_t i = 0; i < table.n; ++i) {
    const auto r = table.row(i);
    dist.push_back(num_array({r.begin(), r.end()}));
    const auto nb = table.neighbors(i);
    idx.push_back(Json(std::vector<std::uint32_t>(nb.begin(), nb.end())));
  }
  rep.results["n"] = table.n;
  rep.results["k"] = table.k;
  rep.results["distances"] = dist;
  rep.results["indices"] = idx;
  if (!f.csv_out.empty()) {
    auto out = open_csv(f.csv_out);
    out << "point,rank,neighbor,distance\n";
    for (std::size_t i = 0; i < table.n; ++i) {
      for (std::size_t j = 0; j < table.k; ++j) {
        out << i << ',' << j + 1 << ',' << table.indices[i * table.k + j] << ','
            << format_g17(table.dist(i, j)) << '\n';
      }
    }
  }
}

struct ConvertArgs {
  std::vector<std::string> images;
  std::vector<std::size_t> resize{224, 224};
  std::string output;
  std::string dtype = "f64";
};

inline void cmd_convert(const ConvertArgs& a, const CommonFlags&, Report& rep) {
  rep.parameters = {{"images", a.images}, {"resize", a.resize}, {"output", a.output}, {"dtype", a.dtype}};
  if (a.resize.size() != 2 || a.resize[0] == 0 || a.resize[1] == 0) {
    throw Error(ErrorCode::InvalidArgument, "--resize needs two positive integers H W");
  }
  std::vector<double> data;
  std::size_t cols = 0, channels = 0;
  for (const auto& path : a.images) {
    const auto img = read_image_pnm(path);
    if (channels == 0) channels = img.dims.channels;
    if (img.dims.channels != channels) {
      throw Error(ErrorCode::InvalidDimensions, path + " has a different channel count");
    }
    const Matrix row = preprocess(img, a.resize[0], a.resize[1]);
    cols = row.cols();
    data.insert(data.end(), row.data().begin(), row.data().end());
  }
  const Matrix m(a.images.size(), cols, std::move(data));
  write_ipmx(m, a.output, parse_dtype(a.dtype));
  rep.results["rows"] = m.rows();
  rep.results["cols"] = m.cols();
  rep.results["height"] = a.resize[0];
  rep.results["width"] = a.resize[1];
  rep.results["channels"] = channels;
}

// ---------------------------------------------------------------------------

inline std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

inline Json report_json(const Report& rep) {
  Json j;
  j["command"] = rep.command;
  j["parameters"] = rep.parameters;
  j["results"] = rep.results;
  j["warnings"] = rep.warnings;
  j["version"] = kVersion;
  return j;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Intrinsic dataset properties: intrinsic dimension, label sharpness, and scaling-law analysis",
               "ipd"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonFlags flags;
  auto add_common = [&](CLI::App* sub, bool threads, bool csv) {
    sub->add_flag("--json", flags.json, "Emit the machine-readable JSON report");
    if (threads) sub->add_option("--threads", flags.threads, "Worker threads (0 = all cores)");
    if (csv) sub->add_option("--csv-out", flags.csv_out, "Also write a plot-ready CSV table");
  };

  Report rep;
  std::function<void()> action;

  IdArgs id;
  auto* s_id = app.add_subcommand("id", "Estimate intrinsic dimension (MLE or TwoNN)");
  s_id->add_option("--input", id.input, "IPMX point cloud")->required();
  s_id->add_option("--estimator", id.estimator)->check(CLI::IsMember({"mle", "twonn"}));
  s_id->add_option("--k", id.k, "MLE neighbor count");
  s_id->add_option("--discard", id.discard, "TwoNN fraction of largest ratios to drop");
  s_id->add_option("--variant", id.variant)->check(CLI::IsMember({"linear_fit", "closed_form"}));
  s_id->add_option("--repeats", id.repeats, "Bootstrap repeats (1 = single estimate on all rows)");
  s_id->add_option("--seed", id.seed);
  add_common(s_id, true, true);
  s_id->callback([&] { action = [&] { cmd_id(id, flags, rep); }; });

  SharpnessArgs sh;
  auto* s_sh = app.add_subcommand("sharpness", "Estimate label sharpness");
  s_sh->add_option("--input", sh.input, "IPMX point cloud")->required();
  s_sh->add_option("--labels", sh.labels, "index,label CSV")->required();
  s_sh->add_option("--m", sh.m, "Sample size per estimate");
  s_sh->add_option("--runs", sh.runs, "Class-pair runs (default 25 with >2 classes, else 1)");
  s_sh->add_flag("--multiclass", sh.multiclass, "Indicator form over all classes at once");
  s_sh->add_option("--seed", sh.seed);
  add_common(s_sh, true, true);
  s_sh->callback([&] { action = [&] { cmd_sharpness(sh, flags, rep); }; });

  FitArgs fit;
  auto* s_fit = app.add_subcommand("fit", "Fit a log-loss scaling law offset");
  s_fit->add_option("--records", fit.records, "Scaling records CSV")->required();
  s_fit->add_option("--model", fit.model)->check(CLI::IsMember({"a", "b", "repr"}));
  s_fit->add_option("--group-by-column", fit.group_by, "Fit separately per value of this column");
  add_common(s_fit, false, true);
  s_fit->callback([&] { action = [&] { cmd_fit(fit, flags, rep); }; });

  LratioArgs lr;
  auto* s_lr = app.add_subcommand("lratio", "Log likelihood ratio of model A (with K_F) over model B");
  s_lr->add_option("--records", lr.records, "Scaling records CSV")->required();
  s_lr->add_option("--group-by-column", lr.group_by);
  add_common(s_lr, false, false);
  s_lr->callback([&] { action = [&] { cmd_lratio(lr, flags, rep); }; });

  CorrelateArgs corr;
  auto* s_corr = app.add_subcommand("correlate", "Pearson correlation of two series");
  s_corr->add_option("--xs", corr.xs)->delimiter(',');
  s_corr->add_option("--ys", corr.ys)->delimiter(',');
  s_corr->add_option("--csv", corr.csv, "CSV file with named columns");
  s_corr->add_option("--x", corr.x_col);
  s_corr->add_option("--y", corr.y_col);
  add_common(s_corr, false, false);
  s_corr->callback([&] { action = [&] { cmd_correlate(corr, flags, rep); }; });

  RankArgs rank;
  auto* s_rank = app.add_subcommand("rank-tasks", "Rank tasks by label sharpness (hardest first)");
  s_rank->add_option("--task", rank.tasks, "name=k_f (repeatable)");
  s_rank->add_option("--kf", rank.kfs, "k_f of an unnamed task (repeatable)")->delimiter(',');
  add_common(s_rank, false, false);
  s_rank->callback([&] { action = [&] { cmd_rank_tasks(rank, flags, rep); }; });

  BoundArgs bound;
  auto* s_bound = app.add_subcommand("robust-bound", "Margin-based robustness radius lower bound");
  s_bound->add_option("--margin", bound.margin)->required();
  s_bound->add_option("--lipschitz", bound.lipschitz)->required();
  add_common(s_bound, false, false);
  s_bound->callback([&] { action = [&] { cmd_robust_bound(bound, flags, rep); }; });

  DimsArgs dims;
  auto* s_dims = app.add_subcommand("compare-dims", "Check d_repr <= d_data");
  s_dims->add_option("--d-data", dims.d_data)->required();
  s_dims->add_option("--d-repr", dims.d_repr)->required();
  add_common(s_dims, false, false);
  s_dims->callback([&] { action = [&] { cmd_compare_dims(dims, flags, rep); }; });

  SynthArgs syn;
  auto* s_syn = app.add_subcommand("synth", "Sample a synthetic manifold (optionally halfspace-labeled)");
  s_syn->add_option("--kind", syn.kind)->check(CLI::IsMember({"hypercube", "hypersphere", "sine_lift"}));
  s_syn->add_option("--d", syn.d, "Intrinsic dimension")->required();
  s_syn->add_option("--n", syn.n, "Ambient dimension")->required();
  s_syn->add_option("--points", syn.points);
  s_syn->add_option("--embedding", syn.embedding)
      ->check(CLI::IsMember({"axis_aligned", "random_orthogonal"}));
  s_syn->add_option("--seed", syn.seed);
  s_syn->add_option("--output", syn.output, "IPMX output")->required();
  s_syn->add_option("--dtype", syn.dtype)->check(CLI::IsMember({"f32", "f64"}));
  s_syn->add_option("--labels-out", syn.labels_out, "Write halfspace labels here");
  s_syn->add_option("--normal", syn.normal, "Halfspace normal (default e_1)")->delimiter(',');
  s_syn->add_option("--threshold", syn.threshold, "Halfspace offset (default median projection)");
  s_syn->add_option("--margin", syn.margin, "Drop points this close to the boundary");
  add_common(s_syn, false, false);
  s_syn->callback([&] { action = [&] { cmd_synth(syn, flags, rep); }; });

  SynthRecordsArgs sr;
  auto* s_sr = app.add_subcommand("synth-records", "Generate scaling records from the model-A law");
  s_sr->add_option("--a", sr.a, "True offset");
  s_sr->add_option("--sizes", sr.sizes)->delimiter(',')->required();
  s_sr->add_option("--d-values", sr.d_values)->delimiter(',')->required();
  s_sr->add_option("--kf-values", sr.kf_values)->delimiter(',')->required();
  s_sr->add_option("--noise-sd", sr.noise_sd);
  s_sr->add_option("--seed", sr.seed);
  s_sr->add_option("--output", sr.output, "CSV output")->required();
  add_common(s_sr, false, false);
  s_sr->callback([&] { action = [&] { cmd_synth_records(sr, flags, rep); }; });

  KnnArgs knn;
  auto* s_knn = app.add_subcommand("knn", "Exact k-nearest-neighbor distance table");
  s_knn->add_option("--input", knn.input)->required();
  s_knn->add_option("--k", knn.k);
  add_common(s_knn, true, true);
  s_knn->callback([&] { action = [&] { cmd_knn(knn, flags, rep); }; });

  ConvertArgs conv;
  auto* s_conv = app.add_subcommand("convert", "PGM/PPM images to a preprocessed IPMX matrix");
  s_conv->add_option("--images", conv.images, "Binary PGM/PPM files")->required();
  s_conv->add_option("--resize", conv.resize, "Target H W")->expected(2);
  s_conv->add_option("--output", conv.output)->required();
  s_conv->add_option("--dtype", conv.dtype)->check(CLI::IsMember({"f32", "f64"}));
  add_common(s_conv, false, false);
  s_conv->callback([&] { action = [&] { cmd_convert(conv, flags, rep); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }
  rep.command = app.get_subcommands().front()->get_name();

  int status = kExitOk;
  Json error;
  try {
    action();
  } catch (const Error& e) {
    status = is_degenerate(e.code()) ? kExitDegenerate : kExitInput;
    error = {{"code", std::string(error_name(e.code()))}, {"message", e.what()}};
  } catch (const std::exception& e) {
    status = kExitInput;
    error = {{"code", "Internal"}, {"message", e.what()}};
  }

  if (status != kExitOk) {
    if (flags.json) {
      Json j;
      j["command"] = rep.command;
      j["parameters"] = rep.parameters;
      j["error"] = error;
      j["warnings"] = rep.warnings;
      j["version"] = kVersion;
      dump_json(out, j);
      out << '\n';
    }
    err << "error: " << error["message"].get<std::string>() << '\n';
    return status;
  }
  if (flags.json) {
    dump_json(out, report_json(rep));
    out << '\n';
  } else {
    out << "ipd " << kVersion << "  " << rep.command << "  " << timestamp() << '\n';
    for (const auto& w : rep.warnings) out << "warning: " << w.get<std::string>() << '\n';
    dump_json(out, rep.results);
    out << '\n';
  }
  return kExitOk;
}

}  // namespace ipd::cli
