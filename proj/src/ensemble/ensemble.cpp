#include "hdgcn/ensemble/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "hdgcn/core/error.hpp"

namespace hdgcn::ensemble {
namespace {

std::string com_label(const Member& m, const model::ModelConfig& cfg) { return m.com.empty() ? cfg.com : m.com; }

template <typename T>
train::Scores score_member(const Member& member, const std::vector<data::SkeletonSequence>& raw,
                           const std::vector<int>& labels, std::size_t classes, MemberReport& report) {
  auto net = train::load_model<T>(member.checkpoint);
  const auto& cfg = net->config();
  if (cfg.num_classes != classes) {
    throw DataError("member " + member.checkpoint.string() + " predicts " + std::to_string(cfg.num_classes) +
                    " classes, dataset has " + std::to_string(classes));
  }
  const int com = net->com_joint();
  if (!member.com.empty() && model::resolve_com(net->topology(), member.com) != com) {
    throw DataError("member " + member.checkpoint.string() + ": CoM '" + member.com +
                    "' differs from the checkpoint's CoM joint " + std::to_string(com));
  }
  data::LoadOptions load;
  load.stream = member.stream;
  load.com = com;
  load.preprocess.window = cfg.window;
  data::Dataset ds;
  ds.num_classes = classes;
  ds.labels = labels;
  try {
    for (const auto& seq : raw) {
      const auto sample = data::prepare_sample(seq, net->topology(), load);
      if (ds.sample_shape.empty()) ds.sample_shape = {sample.persons, 3, sample.frames, sample.joints};
      const std::size_t block = ds.sample_numel();
      const std::size_t start = ds.values.size();
      ds.values.resize(start + block, 0.0f);
      std::copy_n(sample.data.begin(), std::min(block, sample.data.size()),
                  ds.values.begin() + static_cast<std::ptrdiff_t>(start));
    }
  } catch (const DataError& e) {
    throw DataError("member " + member.checkpoint.string() + " (" + data::to_string(member.stream) + "): " + e.what());
  }
  auto scores = train::predict(*net, ds);
  report.checkpoint = member.checkpoint.string();
  report.stream = data::to_string(member.stream);
  report.com = com_label(member, cfg);
  report.com_joint = com;
  report.weight = member.weight;
  report.top1 = train::top_k_accuracy(scores, 1);
  report.top5 = train::top_k_accuracy(scores, 5);
  report.per_class = per_class_accuracy(scores);
  return scores;
}

nlohmann::json nan_to_null(const std::vector<double>& v) {
  auto out = nlohmann::json::array();
  for (double x : v) out.push_back(std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x));
  return out;
}

// Members ordered by (checkpoint, stream, com, weight); ties keep list order.
std::vector<std::size_t> canonical_order(const std::vector<MemberReport>& members) {
  std::vector<std::size_t> order(members.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = members[a];
    const auto& y = members[b];
    return std::tie(x.checkpoint, x.stream, x.com, x.weight) < std::tie(y.checkpoint, y.stream, y.com, y.weight);
  });
  return order;
}

}  // namespace

void EnsembleSpec::validate() const {
  if (members.empty()) throw ConfigError("ensemble needs at least one member");
  double total = 0.0;
  for (const auto& m : members) {
    if (!std::isfinite(m.weight) || m.weight < 0.0) {
      throw ConfigError("member " + m.checkpoint.string() + " has an invalid weight");
    }
    total += m.weight;
  }
  if (total <= 0.0) throw ConfigError("ensemble weights are all zero");
}

EnsembleSpec spec_from_json(const nlohmann::json& j, const std::filesystem::path& root) {
  EnsembleSpec spec;
  try {
    for (const auto& m : j.at("members")) {
      Member member;
      std::filesystem::path p(m.at("checkpoint").get<std::string>());
      member.checkpoint = p.is_absolute() || root.empty() ? p : root / p;
      member.stream = data::parse_stream(m.value("stream", std::string("joint")));
      if (m.contains("com")) {
        member.com = m.at("com").is_number() ? std::to_string(m.at("com").get<int>()) : m.at("com").get<std::string>();
      }
      member.weight = m.value("weight", 1.0);
      spec.members.push_back(std::move(member));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ensemble spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

nlohmann::json to_json(const EnsembleSpec& spec) {
  auto members = nlohmann::json::array();
  for (const auto& m : spec.members) {
    nlohmann::json j{{"checkpoint", m.checkpoint.string()}, {"stream", data::to_string(m.stream)}, {"weight", m.weight}};
    if (!m.com.empty()) j["com"] = m.com;
    members.push_back(j);
  }
  return {{"members", members}};
}

EnsembleSpec read_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ensemble spec " + path.string());
  try {
    return spec_from_json(nlohmann::json::parse(in), path.parent_path());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

train::Scores fuse(const std::vector<train::Scores>& members, const std::vector<double>& weights,
                   const std::vector<std::size_t>& order) {
  if (members.empty()) throw ConfigError("fuse needs at least one member");
  if (weights.size() != members.size()) throw DimensionError("fuse: one weight per member required");
  const auto& first = members.front();
  for (const auto& m : members) {
    if (m.classes != first.classes || m.size() != first.size() || m.probs.size() != first.probs.size()) {
      throw DimensionError("fuse: member score arrays differ in shape");
    }
  }
  std::vector<std::size_t> idx = order;
  if (idx.empty()) {
    idx.resize(members.size());
    std::iota(idx.begin(), idx.end(), 0);
  }
  train::Scores out;
  out.classes = first.classes;
  out.labels = first.labels;
  out.probs.assign(first.probs.size(), 0.0);
  for (std::size_t i : idx) {
    const auto& m = members.at(i);
    for (std::size_t k = 0; k < out.probs.size(); ++k) out.probs[k] += weights[i] * m.probs[k];
  }
  return out;
}

std::vector<int> predictions(const train::Scores& scores) {
  std::vector<int> out(scores.size());
  for (std::size_t n = 0; n < scores.size(); ++n) {
    const double* row = scores.probs.data() + n * scores.classes;
    out[n] = static_cast<int>(std::max_element(row, row + scores.classes) - row);
  }
  return out;
}

std::vector<double> per_class_accuracy(const train::Scores& scores) {
  const auto pred = predictions(scores);
  std::vector<double> hits(scores.classes, 0.0);
  std::vector<double> count(scores.classes, 0.0);
  for (std::size_t n = 0; n < scores.size(); ++n) {
    const auto y = static_cast<std::size_t>(scores.labels[n]);
    count[y] += 1.0;
    if (pred[n] == scores.labels[n]) hits[y] += 1.0;
  }
  std::vector<double> out(scores.classes);
  for (std::size_t c = 0; c < scores.classes; ++c) {
    out[c] = count[c] > 0.0 ? hits[c] / count[c] : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

EvalReport report_from_scores(const std::vector<MemberReport>& members, const std::vector<train::Scores>& scores,
                              const std::vector<std::string>& class_names) {
  if (members.size() != scores.size()) throw DimensionError("report: one score array per member required");
  const auto order = canonical_order(members);
  std::vector<double> weights;
  for (const auto& m : members) weights.push_back(m.weight);
  const auto fused = fuse(scores, weights, order);

  EvalReport report;
  report.class_names = class_names;
  report.samples = fused.size();
  report.top1 = train::top_k_accuracy(fused, 1);
  report.top5 = train::top_k_accuracy(fused, 5);
  report.per_class = per_class_accuracy(fused);
  report.confusion.assign(fused.classes, std::vector<std::size_t>(fused.classes, 0));
  const auto pred = predictions(fused);
  for (std::size_t n = 0; n < fused.size(); ++n) {
    report.confusion[static_cast<std::size_t>(fused.labels[n])][static_cast<std::size_t>(pred[n])] += 1;
  }
  for (std::size_t i : order) report.members.push_back(members[i]);

  std::map<std::string, std::vector<std::size_t>> by_com;
  for (std::size_t i : order) by_com[members[i].com].push_back(i);
  for (const auto& [com, idx] : by_com) {
    report.per_com[com] = per_class_accuracy(fuse(scores, weights, idx));
  }
  return report;
}

EvalReport evaluate(const EnsembleSpec& spec, const data::DatasetManifest& manifest) {
  spec.validate();
  std::vector<data::SkeletonSequence> raw;
  std::vector<int> labels;
  for (const auto& entry : manifest.samples) {
    raw.push_back(data::read_sequence(manifest.path_of(entry)));
    labels.push_back(entry.label);
  }
  if (raw.empty()) throw DataError("ensemble dataset is empty");
  const std::size_t classes = manifest.class_names.size();
  std::vector<MemberReport> reports(spec.members.size());
  std::vector<train::Scores> scores;
  for (std::size_t i = 0; i < spec.members.size(); ++i) {
    const auto& m = spec.members[i];
    const auto precision = train::read_sidecar(m.checkpoint).value("precision", std::string("f32"));
    scores.push_back(precision == "f64" ? score_member<double>(m, raw, labels, classes, reports[i])
                                        : score_member<float>(m, raw, labels, classes, reports[i]));
  }
  return report_from_scores(reports, scores, manifest.class_names);
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["samples"] = r.samples;
  j["top1"] = r.top1;
  j["top5"] = r.top5;
  j["classes"] = r.class_names;
  j["per_class"] = nan_to_null(r.per_class);
  j["confusion"] = r.confusion;
  auto members = nlohmann::json::array();
  for (const auto& m : r.members) {
    members.push_back({{"checkpoint", m.checkpoint},
                       {"stream", m.stream},
                       {"com", m.com},
                       {"com_joint", m.com_joint},
                       {"weight", m.weight},
                       {"top1", m.top1},
                       {"top5", m.top5},
                       {"per_class", nan_to_null(m.per_class)}});
  }
  j["members"] = members;
  auto per_com = nlohmann::json::object();
  for (const auto& [com, acc] : r.per_com) per_com[com] = nan_to_null(acc);
  j["per_com"] = per_com;
  return j;
}

void write_per_class_csv(const std::filesystem::path& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "class,name,samples,ensemble";
  for (std::size_t i = 0; i < r.members.size(); ++i) {
    out << ",m" << i << ':' << r.members[i].stream << '/' << r.members[i].com;
  }
  out << '\n';
  char cell[32];
  auto put = [&](double v) {
    if (std::isnan(v)) {
      out << ",";
    } else {
      std::snprintf(cell, sizeof cell, ",%.6f", v);
      out << cell;
    }
  };
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    std::size_t samples = 0;
    for (auto n : r.confusion[c]) samples += n;
    out << c << ',' << (c < r.class_names.size() ? r.class_names[c] : "") << ',' << samples;
    put(r.per_class[c]);
    for (const auto& m : r.members) put(m.per_class[c]);
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace hdgcn::ensemble
