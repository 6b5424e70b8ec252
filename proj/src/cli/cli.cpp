#include "hdgcn/cli/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "hdgcn/core/checkpoint.hpp"
#include "hdgcn/core/error.hpp"
#include "hdgcn/data/synthetic.hpp"
#include "hdgcn/ensemble/ensemble.hpp"
#include "hdgcn/graph/hd_graph.hpp"
#include "hdgcn/model/gradcheck_suite.hpp"
#include "hdgcn/model/network.hpp"
#include "hdgcn/train/trainer.hpp"

namespace hdgcn::cli {
namespace {

struct Options {
  std::uint64_t seed = 1;
  std::string precision = "f32";
  bool quiet = false;
  bool print_config = false;

  struct {
    std::string topology = "ntu25";
    std::string com = "belly";
    std::string variant = "fc";
    std::string direction = "algorithm";
    std::string norm = "per-subset";
    bool bfs = false;
    bool raw = false;
    std::string dot;
    std::string json;
    std::string adjacency;
  } graph;

  data::SyntheticSpec synthetic;
  std::string gen_out;

  struct {
    std::string in;
    std::string out;
    std::string stream = "bone";
    std::string topology;
    std::string com = "belly";
    std::size_t window = 64;
    bool loop_pad = false;
  } seq;

  struct {
    std::string config;
    std::string preset;
    std::string data;
    std::string eval;
    std::string out;
    int epochs = 0;
    std::size_t batch_size = 0;
    double lr_max = 0.0;
    double lr_min = -1.0;
    int warmup = -1;
    double weight_decay = -1.0;
    double momentum = -1.0;
    double label_smoothing = -1.0;
    double crop = 0.0;
    std::string com;
    std::string stream;
    bool resume = false;
    int stop_after = 0;
  } train;

  struct {
    std::string checkpoint;
    std::string data;
    std::string stream;
    std::string out;
    std::string per_class;
    std::string attention;
    std::size_t attention_samples = 8;
    std::size_t batch_size = 32;
  } eval;

  struct {
    std::string spec;
    std::string data;
    std::string out;
    std::string per_class;
  } ens;

  struct {
    std::string module = "all";
    double step = 1e-5;
    double tolerance = 1e-4;
    std::size_t max_entries = 0;
  } grad;

  struct {
    std::string preset;
    std::string config;
    std::string out;
  } flops;
};

std::unique_ptr<CLI::App> build_app(Options& o) {
  auto app = std::make_unique<CLI::App>("HD-GCN skeleton action recognition",
                                        "hdgcn");
  app->require_subcommand(1);
  app->fallthrough();
  app->add_option("--seed", o.seed, "Random seed for initialization, shuffling and data generation")
      ->capture_default_str();
  app->add_option("--precision", o.precision, "Floating point precision of models: f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  app->add_flag("--quiet", o.quiet, "Suppress progress output and result summaries on stdout");
  app->add_flag("--print-config", o.print_config, "Print the resolved configuration as JSON before running");

  auto* graph = app->add_subcommand("graph", "Build skeleton graphs and export them");
  graph->require_subcommand(1);
  auto* build = graph->add_subcommand("build", "Decompose a skeleton and build its adjacency");
  build->add_option("--topology", o.graph.topology, "Builtin topology name or topology JSON file")->capture_default_str();
  build->add_option("--com", o.graph.com, "CoM joint: chest, belly, hip or a 1-based joint id")->capture_default_str();
  build->add_option("--variant", o.graph.variant, "Graph: fc, pc or conventional")
      ->check(CLI::IsMember({"fc", "pc", "conventional"}))
      ->capture_default_str();
  build->add_option("--direction", o.graph.direction, "Centripetal orientation: algorithm or swapped")
      ->check(CLI::IsMember({"algorithm", "swapped"}))
      ->capture_default_str();
  build->add_option("--norm", o.graph.norm, "Degree normalization scope: per-subset or pooled")
      ->check(CLI::IsMember({"per-subset", "pooled"}))
      ->capture_default_str();
  build->add_flag("--bfs", o.graph.bfs, "Use BFS layering even where explicit hierarchy sets exist");
  build->add_flag("--raw", o.graph.raw, "Export the adjacency before normalization");
  build->add_option("--export-dot", o.graph.dot, "Write a DOT rendering of the hierarchy layers and edges");
  build->add_option("--export-json", o.graph.json, "Write the hierarchy node sets as JSON");
  build->add_option("--export-adjacency", o.graph.adjacency, "Write the adjacency tensors as an HDT1 file");

  auto* dat = app->add_subcommand("data", "Generate, convert and transform skeleton sequences");
  dat->require_subcommand(1);
  auto* gen = dat->add_subcommand("generate", "Write a seeded synthetic motion dataset with train/test manifests");
  gen->add_option("--out", o.gen_out, "Output directory")->required();
  gen->add_option("--classes", o.synthetic.classes, "Number of motion classes (2-8)")->capture_default_str();
  gen->add_option("--train-per-class", o.synthetic.train_per_class, "Training samples per class")->capture_default_str();
  gen->add_option("--test-per-class", o.synthetic.test_per_class, "Test samples per class")->capture_default_str();
  gen->add_option("--noise", o.synthetic.noise, "Coordinate noise standard deviation in metres")->capture_default_str();
  gen->add_option("--max-yaw", o.synthetic.max_yaw, "Largest random body rotation about the vertical axis, radians")
      ->capture_default_str();
  gen->add_option("--distractor-prob", o.synthetic.distractor_prob,
                  "Probability of mixing in each other motion at reduced amplitude")
      ->capture_default_str();
  gen->add_option("--distractor-scale", o.synthetic.distractor_scale, "Largest amplitude fraction of mixed-in motions")
      ->capture_default_str();
  gen->add_option("--min-frames", o.synthetic.min_frames, "Shortest raw sequence length")->capture_default_str();
  gen->add_option("--max-frames", o.synthetic.max_frames, "Longest raw sequence length")->capture_default_str();

  auto* conv = dat->add_subcommand("convert", "Convert a sequence between HDS1 binary and JSON");
  conv->add_option("--in", o.seq.in, "Input sequence (.hds or .json)")->required();
  conv->add_option("--out", o.seq.out, "Output sequence (.hds or .json)")->required();

  auto* derive = dat->add_subcommand("derive", "Derive a bone or motion stream from a joint sequence");
  derive->add_option("--in", o.seq.in, "Input joint sequence")->required();
  derive->add_option("--out", o.seq.out, "Output sequence")->required();
  derive->add_option("--stream", o.seq.stream, "Target stream: joint, bone, joint_motion or bone_motion")
      ->check(CLI::IsMember({"joint", "bone", "joint_motion", "bone_motion"}))
      ->capture_default_str();
  derive->add_option("--topology", o.seq.topology, "Topology name or file (default: the sequence's own)");
  derive->add_option("--com", o.seq.com, "CoM the bones are rooted at")->capture_default_str();

  auto* prep = dat->add_subcommand("preprocess", "Center on the frame-1 CoM and bring to a fixed window");
  prep->add_option("--in", o.seq.in, "Input sequence")->required();
  prep->add_option("--out", o.seq.out, "Output sequence")->required();
  prep->add_option("--window", o.seq.window, "Output frame count")->capture_default_str();
  prep->add_option("--topology", o.seq.topology, "Topology name or file (default: the sequence's own)");
  prep->add_option("--com", o.seq.com, "CoM joint used for centering")->capture_default_str();
  prep->add_flag("--loop-pad", o.seq.loop_pad, "Repeat short sequences instead of stretching them");

  auto* inspect = dat->add_subcommand("inspect", "Print a JSON summary of a sequence file");
  inspect->add_option("--in", o.seq.in, "Sequence file")->required();

  auto* tr = app->add_subcommand("train", "Train a model on a dataset manifest");
  tr->add_option("--config", o.train.config, "JSON file with \"model\" and/or \"train\" sections");
  tr->add_option("--preset", o.train.preset, "Model preset used as the base configuration")
      ->check(CLI::IsMember(model::preset_names()));
  tr->add_option("--data", o.train.data, "Training manifest")->required();
  tr->add_option("--eval", o.train.eval, "Evaluation manifest for per-epoch accuracy");
  tr->add_option("--out", o.train.out, "Output directory for checkpoints and logs")->required();
  tr->add_option("--epochs", o.train.epochs, "Number of epochs");
  tr->add_option("--batch-size", o.train.batch_size, "Samples per step");
  tr->add_option("--lr-max", o.train.lr_max, "Peak learning rate");
  tr->add_option("--lr-min", o.train.lr_min, "Final learning rate");
  tr->add_option("--warmup", o.train.warmup, "Warmup epochs");
  tr->add_option("--weight-decay", o.train.weight_decay, "L2 weight decay added to gradients");
  tr->add_option("--momentum", o.train.momentum, "Nesterov momentum");
  tr->add_option("--label-smoothing", o.train.label_smoothing, "Label smoothing of the cross-entropy");
  tr->add_option("--crop", o.train.crop, "Random temporal crop: minimum kept fraction in (0, 1)");
  tr->add_option("--com", o.train.com, "CoM of the hierarchy graph: chest, belly, hip or a joint id");
  tr->add_option("--stream", o.train.stream, "Input stream: joint, bone, joint_motion or bone_motion")
      ->check(CLI::IsMember({"joint", "bone", "joint_motion", "bone_motion"}));
  tr->add_flag("--resume", o.train.resume, "Continue from the last checkpoint in --out");
  tr->add_option("--stop-after", o.train.stop_after, "Stop after this many completed epochs");

  auto* ev = app->add_subcommand("eval", "Evaluate one checkpoint");
  ev->add_option("--checkpoint", o.eval.checkpoint, "Checkpoint (.hdt, .json sidecar or common stem)")->required();
  ev->add_option("--data", o.eval.data, "Evaluation manifest")->required();
  ev->add_option("--stream", o.eval.stream, "Input stream (default: the model's)")
      ->check(CLI::IsMember({"joint", "bone", "joint_motion", "bone_motion"}));
  ev->add_option("--out", o.eval.out, "Write the report JSON here");
  ev->add_option("--per-class", o.eval.per_class, "Write per-class accuracy CSV here");
  ev->add_option("--dump-attention", o.eval.attention, "Write hierarchy attention scores as CSV");
  ev->add_option("--attention-samples", o.eval.attention_samples, "Samples included in the attention dump")
      ->capture_default_str();
  ev->add_option("--batch-size", o.eval.batch_size, "Samples per forward pass")->capture_default_str();

  auto* en = app->add_subcommand("ensemble", "Fuse the softmax scores of several checkpoints");
  en->add_option("--spec", o.ens.spec, "Ensemble spec JSON")->required();
  en->add_option("--data", o.ens.data, "Evaluation manifest")->required();
  en->add_option("--out", o.ens.out, "Write the report JSON here");
  en->add_option("--per-class", o.ens.per_class, "Write per-class accuracy CSV here");

  auto* gc = app->add_subcommand("gradcheck", "Finite-difference gradient checks at 64-bit");
  gc->add_option("--module", o.grad.module, "Which checks: all, ops, layers or model")
      ->check(CLI::IsMember({"all", "ops", "layers", "model"}))
      ->capture_default_str();
  gc->add_option("--step", o.grad.step, "Central difference step")->capture_default_str();
  gc->add_option("--tolerance", o.grad.tolerance, "Largest accepted relative error")->capture_default_str();
  gc->add_option("--max-entries", o.grad.max_entries, "Entries checked per input, 0 for all")->capture_default_str();

  auto* fl = app->add_subcommand("flops", "Parameter and FLOP counts of a model configuration");
  auto* fp = fl->add_option("--preset", o.flops.preset, "Model preset")->check(CLI::IsMember(model::preset_names()));
  auto* fc = fl->add_option("--config", o.flops.config, "Model config JSON file");
  fp->excludes(fc);
  fl->add_option("--out", o.flops.out, "Also write the report JSON here");

  for (auto* sub : {graph, build, dat, gen, conv, derive, prep, inspect, tr, ev, en, gc, fl}) sub->fallthrough();
  return app;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  f << text;
  if (!f) throw DataError("write failed: " + path);
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

nlohmann::json options_json(const CLI::App& app) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto* opt : app.get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    const auto& name = opt->get_lnames().front();
    if (opt->get_type_size() == 0) {
      j[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      j[name] = opt->as<std::string>();
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

const CLI::App* selected_leaf(const CLI::App& app, std::string& path) {
  const CLI::App* cur = &app;
  while (true) {
    auto subs = cur->get_subcommands();
    if (subs.empty()) return cur;
    cur = subs.front();
    path += (path.empty() ? "" : " ") + cur->get_name();
  }
}

class Runner {
 public:
  Runner(Options& o, CLI::App& app, std::ostream& out, std::ostream& err) : o_(o), app_(app), out_(out), err_(err) {}

  int dispatch() {
    std::string path;
    const CLI::App* leaf = selected_leaf(app_, path);
    if (o_.print_config && path != "train" && path != "flops") {
      nlohmann::json j{{"command", path}, {"global", options_json(app_)}, {"options", options_json(*leaf)}};
      out_ << j.dump(2) << '\n';
    }
    if (path == "graph build") return graph_build();
    if (path == "data generate") return data_generate();
    if (path == "data convert") return data_convert();
    if (path == "data derive") return data_derive();
    if (path == "data preprocess") return data_preprocess();
    if (path == "data inspect") return data_inspect();
    if (path == "train") return o_.precision == "f64" ? train_cmd<double>() : train_cmd<float>();
    if (path == "eval") return eval_cmd();
    if (path == "ensemble") return ensemble_cmd();
    if (path == "gradcheck") return gradcheck_cmd();
    if (path == "flops") return flops_cmd();
    err_ << "error: no command selected\n";
    return kUsage;
  }

 private:
  void emit(const nlohmann::json& j) {
    if (!o_.quiet) out_ << j.dump(2) << '\n';
  }

  int graph_build() {
    const auto& g = o_.graph;
    const auto topo = skeleton::resolve(g.topology);
    const int com = model::resolve_com(topo, g.com);
    const auto decomp = graph::decompose(topo, com, !g.bfs);
    graph::Adjacency adj;
    if (g.variant == "conventional") {
      adj = graph::build_conventional(topo);
    } else {
      adj = graph::build_hd(topo, decomp, graph::parse_variant(g.variant),
                            g.direction == "swapped" ? graph::Direction::kSwapped : graph::Direction::kAlgorithm);
    }
    const auto normalized =
        graph::normalize(adj, g.norm == "pooled" ? graph::NormScope::kPooled : graph::NormScope::kPerSubset);
    if (!g.dot.empty()) write_text(g.dot, graph::to_dot(topo, decomp, adj));
    if (!g.json.empty()) write_text(g.json, graph::decomposition_json(decomp).dump(2) + "\n");
    if (!g.adjacency.empty()) {
      const auto& a = g.raw ? adj : normalized;
      std::vector<NamedTensor> tensors;
      static const char* kSubsets[] = {"id", "cp", "cf"};
      for (std::size_t l = 0; l < a.layers; ++l) {
        for (std::size_t s = 0; s < 3; ++s) {
          NamedTensor t{"adj.l" + std::to_string(l) + "." + kSubsets[s], {a.joints, a.joints}, {}};
          for (std::size_t i = 0; i < a.joints; ++i) {
            for (std::size_t j = 0; j < a.joints; ++j) t.values.push_back(static_cast<float>(a.at(l, s, i, j)));
          }
          tensors.push_back(std::move(t));
        }
      }
      write_tensors(g.adjacency, tensors);
    }
    nlohmann::json j;
    j["topology"] = topo.name;
    j["com"] = com;
    j["variant"] = g.variant;
    j["decomposition"] = graph::decomposition_json(decomp);
    auto edges = nlohmann::json::array();
    for (std::size_t l = 0; l < adj.layers; ++l) {
      edges.push_back({{"layer", l}, {"id", adj.nonzeros(l, 0)}, {"cp", adj.nonzeros(l, 1)}, {"cf", adj.nonzeros(l, 2)}});
    }
    j["nonzeros"] = edges;
    emit(j);
    return kOk;
  }

  int data_generate() {
    auto spec = o_.synthetic;
    spec.seed = o_.seed;
    const auto ds = data::generate_synthetic(spec, o_.gen_out);
    emit({{"out", o_.gen_out},
          {"train", ds.train.samples.size()},
          {"test", ds.test.samples.size()},
          {"classes", ds.train.class_names},
          {"seed", spec.seed}});
    return kOk;
  }

  int data_convert() {
    data::write_sequence(o_.seq.out, data::read_sequence(o_.seq.in));
    return kOk;
  }

  skeleton::Topology topology_for(const data::SkeletonSequence& seq) {
    return skeleton::resolve(o_.seq.topology.empty() ? seq.topology : o_.seq.topology);
  }

  int data_derive() {
    const auto seq = data::read_sequence(o_.seq.in);
    const auto topo = topology_for(seq);
    const auto out = data::derive_stream(seq, data::parse_stream(o_.seq.stream), topo, model::resolve_com(topo, o_.seq.com));
    data::write_sequence(o_.seq.out, out);
    return kOk;
  }

  int data_preprocess() {
    const auto seq = data::read_sequence(o_.seq.in);
    const auto topo = topology_for(seq);
    data::PreprocessOptions p;
    p.window = o_.seq.window;
    p.temporal = o_.seq.loop_pad ? data::Temporal::kLoopPad : data::Temporal::kResample;
    data::write_sequence(o_.seq.out, data::preprocess(seq, model::resolve_com(topo, o_.seq.com), p));
    return kOk;
  }

  int data_inspect() {
    const auto seq = data::read_sequence(o_.seq.in);
    const auto [lo, hi] = std::minmax_element(seq.data.begin(), seq.data.end());
    out_ << nlohmann::json{{"topology", seq.topology},
                           {"stream", data::to_string(seq.stream)},
                           {"persons", seq.persons},
                           {"frames", seq.frames},
                           {"joints", seq.joints},
                           {"label", seq.label ? nlohmann::json(*seq.label) : nlohmann::json(nullptr)},
                           {"min", *lo},
                           {"max", *hi}}
                .dump(2)
         << '\n';
    return kOk;
  }

  template <typename T>
  int train_cmd() {
    const auto& t = o_.train;
    model::ModelConfig mcfg = t.preset.empty() ? model::ModelConfig{} : model::preset(t.preset);
    train::TrainConfig tcfg;
    if (!t.config.empty()) {
      const auto j = read_json_file(t.config);
      if (j.contains("model") || j.contains("train")) {
        if (j.contains("model")) mcfg = model::from_json(j.at("model"), mcfg);
        if (j.contains("train")) tcfg = train::train_config_from_json(j.at("train"), tcfg);
      } else {
        mcfg = model::from_json(j, mcfg);
      }
    }
    if (t.epochs > 0) tcfg.epochs = t.epochs;
    if (t.batch_size > 0) tcfg.batch_size = t.batch_size;
    if (t.lr_max > 0.0) tcfg.lr_max = t.lr_max;
    if (t.lr_min >= 0.0) tcfg.lr_min = t.lr_min;
    if (t.warmup >= 0) tcfg.warmup_epochs = t.warmup;
    if (t.weight_decay >= 0.0) tcfg.weight_decay = t.weight_decay;
    if (t.momentum >= 0.0) tcfg.momentum = t.momentum;
    if (t.label_smoothing >= 0.0) tcfg.label_smoothing = t.label_smoothing;
    if (t.crop > 0.0) tcfg.crop_min_fraction = t.crop;
    if (!t.com.empty()) mcfg.com = t.com;
    if (!t.stream.empty()) mcfg.stream = t.stream;
    if (app_.get_option("--seed")->count() > 0) tcfg.seed = o_.seed;
    mcfg.validate();
    tcfg.validate();
    if (o_.print_config) {
      out_ << nlohmann::json{{"model", model::to_json(mcfg)}, {"train", train::to_json(tcfg)}, {"precision", o_.precision}}
                  .dump(2)
           << '\n';
    }

    const auto manifest = data::read_manifest(t.data);
    if (manifest.class_names.size() != mcfg.num_classes) {
      throw DataError("manifest has " + std::to_string(manifest.class_names.size()) + " classes, model expects " +
                      std::to_string(mcfg.num_classes));
    }
    model::Network<T> net(mcfg, tcfg.seed);
    data::LoadOptions load;
    load.stream = data::parse_stream(mcfg.stream);
    load.com = net.com_joint();
    load.preprocess.window = mcfg.window;
    const auto train_set = data::load_dataset(manifest, net.topology(), load);
    data::Dataset eval_set;
    if (!t.eval.empty()) eval_set = data::load_dataset(data::read_manifest(t.eval), net.topology(), load);

    std::vector<data::SkeletonSequence> raw;
    train::TrainOptions options;
    options.out_dir = t.out;
    options.resume = t.resume;
    options.stop_after = t.stop_after;
    options.load_options = load;
    if (tcfg.crop_min_fraction < 1.0) {
      for (const auto& e : manifest.samples) raw.push_back(data::read_sequence(manifest.path_of(e)));
      options.raw_train = &raw;
    }
    if (!o_.quiet) {
      options.on_epoch = [this](const train::EpochMetrics& m) {
        char line[160];
        std::snprintf(line, sizeof line, "epoch %d  lr %.6f  loss %.4f  top1 %.4f  top5 %.4f\n", m.epoch, m.lr, m.loss,
                      m.top1, m.top5);
        err_ << line << std::flush;
      };
    }
    const auto result = train::train(net, train_set, t.eval.empty() ? nullptr : &eval_set, tcfg, options);
    nlohmann::json summary{{"model", model::describe(mcfg)},
                           {"epochs_run", result.history.size()},
                           {"steps", result.steps},
                           {"best_top1", result.best_top1},
                           {"best_epoch", result.best_epoch}};
    if (!result.history.empty()) summary["final_top1"] = result.history.back().top1;
    emit(summary);
    return kOk;
  }

  template <typename T>
  void dump_attention(const data::DatasetManifest& manifest, const std::string& stream) {
    auto net = train::load_model<T>(o_.eval.checkpoint);
    data::LoadOptions load;
    load.stream = data::parse_stream(stream.empty() ? net->config().stream : stream);
    load.com = net->com_joint();
    load.preprocess.window = net->config().window;
    auto subset = manifest;
    if (subset.samples.size() > o_.eval.attention_samples) subset.samples.resize(o_.eval.attention_samples);
    const auto ds = data::load_dataset(subset, net->topology(), load);
    Shape shape{ds.size()};
    shape.insert(shape.end(), ds.sample_shape.begin(), ds.sample_shape.end());
    net->forward(DiffTensor<T>::constant(shape, std::vector<T>(ds.values.begin(), ds.values.end())), false);
    std::ofstream f(o_.eval.attention);
    if (!f) throw DataError("cannot write " + o_.eval.attention);
    f << "block,sample,layer,channel,score\n";
    for (const auto& rec : net->attention()) {
      const std::size_t n = rec.shape[0], l = rec.shape[1], c = rec.shape[2];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < l; ++k) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            f << rec.block << ',' << i << ',' << k << ',' << ch << ',' << rec.scores[(i * l + k) * c + ch] << '\n';
          }
        }
      }
    }
    if (!f) throw DataError("write failed: " + o_.eval.attention);
  }

  int eval_cmd() {
    const auto manifest = data::read_manifest(o_.eval.data);
    const auto side = train::read_sidecar(o_.eval.checkpoint);
    ensemble::Member m;
    m.checkpoint = o_.eval.checkpoint;
    const std::string stream =
        o_.eval.stream.empty() ? side.at("model").value("stream", std::string("joint")) : o_.eval.stream;
    m.stream = data::parse_stream(stream);
    ensemble::EnsembleSpec spec{{m}};
    const auto report = ensemble::evaluate(spec, manifest);
    finish_report(report, o_.eval.out, o_.eval.per_class);
    if (!o_.eval.attention.empty()) {
      if (side.value("precision", std::string("f32")) == "f64") {
        dump_attention<double>(manifest, o_.eval.stream);
      } else {
        dump_attention<float>(manifest, o_.eval.stream);
      }
    }
    return kOk;
  }

  void finish_report(const ensemble::EvalReport& report, const std::string& out, const std::string& per_class) {
    const auto j = ensemble::to_json(report);
    if (!out.empty()) write_text(out, j.dump(2) + "\n");
    if (!per_class.empty()) ensemble::write_per_class_csv(per_class, report);
    if (!o_.quiet) {
      nlohmann::json brief{{"samples", report.samples}, {"top1", report.top1}, {"top5", report.top5}};
      auto members = nlohmann::json::array();
      for (const auto& mr : report.members) {
        members.push_back({{"checkpoint", mr.checkpoint}, {"stream", mr.stream}, {"com", mr.com}, {"top1", mr.top1}});
      }
      brief["members"] = members;
      out_ << brief.dump(2) << '\n';
    }
  }

  int ensemble_cmd() {
    const auto spec = ensemble::read_spec(o_.ens.spec);
    const auto report = ensemble::evaluate(spec, data::read_manifest(o_.ens.data));
    finish_report(report, o_.ens.out, o_.ens.per_class);
    return kOk;
  }

  int gradcheck_cmd() {
    GradcheckOptions options;
    options.step = o_.grad.step;
    options.tolerance = o_.grad.tolerance;
    options.max_entries = o_.grad.max_entries;
    options.seed = o_.seed;
    bool ok = true;
    std::size_t count = 0;
    double worst = 0.0;
    for (const auto& c : model::gradcheck_suite(o_.seed)) {
      if (o_.grad.module != "all" && c.module != o_.grad.module) continue;
      const auto r = c.run(options);
      ok = ok && r.passed;
      worst = std::max(worst, r.max_rel_error);
      ++count;
      if (!o_.quiet || !r.passed) {
        char line[200];
        std::snprintf(line, sizeof line, "%-4s %-7s %-30s entries %6zu  max rel err %.3e  %s\n", r.passed ? "ok" : "FAIL",
                      c.module.c_str(), c.name.c_str(), r.checked, r.max_rel_error, r.worst.c_str());
        (r.passed ? out_ : err_) << line;
      }
    }
    char line[120];
    std::snprintf(line, sizeof line, "%zu checks, max rel err %.3e, tolerance %.1e: %s\n", count, worst,
                  options.tolerance, ok ? "passed" : "FAILED");
    (ok ? out_ : err_) << line;
    return ok ? kOk : kNumerical;
  }

  int flops_cmd() {
    model::ModelConfig cfg;
    if (!o_.flops.config.empty()) {
      const auto j = read_json_file(o_.flops.config);
      cfg = model::from_json(j.contains("model") ? j.at("model") : j);
    } else if (!o_.flops.preset.empty()) {
      cfg = model::preset(o_.flops.preset);
    } else {
      err_ << "error: flops needs --preset or --config\n";
      return kUsage;
    }
    if (o_.print_config) out_ << nlohmann::json{{"model", model::to_json(cfg)}}.dump(2) << '\n';
    const auto j = model::to_json(model::complexity(cfg));
    if (!o_.flops.out.empty()) write_text(o_.flops.out, j.dump(2) + "\n");
    emit(j);
    return kOk;
  }

  Options& o_;
  CLI::App& app_;
  std::ostream& out_;
  std::ostream& err_;
};

void collect_flags(const CLI::App& app, const std::string& path, std::vector<FlagDoc>& out) {
  for (const auto* opt : app.get_options()) {
    for (const auto& l : opt->get_lnames()) out.push_back({path, "--" + l, opt->get_description()});
  }
  for (const auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
    collect_flags(*sub, path.empty() ? sub->get_name() : path + " " + sub->get_name(), out);
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options options;
  auto app = build_app(options);
  try {
    app->parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app->exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  Runner runner(options, *app, out, err);
  try {
    return runner.dispatch();
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kDataOrConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataOrConfig;
  }
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

std::vector<FlagDoc> flag_table() {
  Options options;
  auto app = build_app(options);
  std::vector<FlagDoc> out;
  collect_flags(*app, "", out);
  return out;
}

std::string help_text(const std::string& command) {
  Options options;
  auto app = build_app(options);
  const CLI::App* cur = app.get();
  std::istringstream words(command);
  std::string w;
  while (words >> w) cur = cur->get_subcommand(w);
  return cur->help();
}

}  // namespace hdgcn::cli
