#pragma once

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oncoabs/baselines/bow.hpp"
#include "oncoabs/baselines/ontology.hpp"
#include "oncoabs/corpus/generator.hpp"
#include "oncoabs/corpus/io.hpp"
#include "oncoabs/corpus/stats.hpp"
#include "oncoabs/evalx/ablation.hpp"
#include "oncoabs/model/checkpoint.hpp"
#include "oncoabs/rationale/rationale.hpp"
#include "oncoabs/service/predictor.hpp"
#include "oncoabs/service/server.hpp"
#include "oncoabs/train/pipeline.hpp"

namespace oncoabs::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

inline constexpr const char* kVocabFile = "vocab.json";
inline constexpr const char* kPretrainedFile = "encoder.transformer.ckpt";

/// Records what a subcommand read and wrote. Written beside the primary
/// output as `<output>.manifest.json`, or as `manifest.json` inside an output
/// directory.
class Manifest {
 public:
  explicit Manifest(std::string subcommand) : name_(std::move(subcommand)), start_(std::chrono::steady_clock::now()) {}

  ojson config = ojson::object();
  std::optional<std::uint64_t> seed;

  void input(const fs::path& p) { inputs_[p.string()] = hex64(file_hash(p)); }
  void output(const fs::path& p) { outputs_[p.string()] = hex64(file_hash(p)); }

  fs::path write(const fs::path& primary) const {
    ojson j;
    j["subcommand"] = name_;
    j["config"] = config;
    j["seed"] = seed ? ojson(*seed) : ojson(nullptr);
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const auto path = fs::is_directory(primary) ? primary / "manifest.json" : fs::path(primary.string() + ".manifest.json");
    write_file(path, j.dump(2) + "\n");
    return path;
  }

 private:
  std::string name_;
  std::chrono::steady_clock::time_point start_;
  std::map<std::string, std::string> inputs_, outputs_;
};

/// Shared flags.
struct Common {
  std::string corpus = "corpus";
  std::string models = "models";
  std::uint64_t seed = 1;
  std::uint64_t fold_seed = 1;
  std::string window = "-30:30";
  std::string kinds = "path,rad,op";
  std::string attribute = "site";
};

struct ModelFlags {
  std::string encoder = "context-free";
  std::size_t dim = 128;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double lr = 1e-3;
  std::size_t patience = 3;

  model::ModelConfig model_config() const {
    model::ModelConfig m;
    m.encoder = model::parse_encoder(encoder);
    m.embed_dim = dim;
    m.ff_dim = 2 * dim;
    m.layers = layers;
    m.heads = heads;
    return m;
  }
  train::TrainConfig train_config(std::uint64_t seed) const {
    train::TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch;
    t.lr = lr;
    t.patience = patience;
    t.seed = seed;
    return t;
  }
  ojson json() const {
    return {{"encoder", encoder}, {"dim", dim}, {"layers", layers}, {"heads", heads}, {"epochs", epochs},
            {"batch", batch},     {"lr", lr},   {"patience", patience}};
  }
};

inline void add_common(CLI::App* c, Common& o, bool model_dir = true) {
  c->add_option("--corpus", o.corpus, "Corpus directory written by gen-corpus")->capture_default_str();
  if (model_dir) c->add_option("--models", o.models, "Directory of vocab, checkpoints and metrics")->capture_default_str();
  c->add_option("--seed", o.seed, "Seed for every random choice of this command")->capture_default_str();
}

inline void add_data(CLI::App* c, Common& o) {
  c->add_option("--attribute", o.attribute, "site, histology, clinical-t, clinical-n, clinical-m, path-t, path-n, path-m")
      ->capture_default_str();
  c->add_option("--window", o.window, "Days around diagnosis, e.g. -30:30")->capture_default_str();
  c->add_option("--kinds", o.kinds, "Document kinds, e.g. path,rad,op")->capture_default_str();
  c->add_option("--fold-seed", o.fold_seed, "Seed of the patient fold assignment")->capture_default_str();
}

inline void add_model(CLI::App* c, ModelFlags& m) {
  c->add_option("--encoder", m.encoder, "context-free or transformer")->capture_default_str();
  c->add_option("--dim", m.dim, "Embedding width")->capture_default_str();
  c->add_option("--layers", m.layers, "Transformer layers")->capture_default_str();
  c->add_option("--heads", m.heads, "Transformer heads")->capture_default_str();
  c->add_option("--epochs", m.epochs, "Maximum training epochs")->capture_default_str();
  c->add_option("--batch", m.batch, "Mini-batch size")->capture_default_str();
  c->add_option("--lr", m.lr, "Adam learning rate")->capture_default_str();
  c->add_option("--patience", m.patience, "Epochs without dev improvement before stopping")->capture_default_str();
}

// ---------------------------------------------------------------------------

class App {
 public:
  App(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(std::vector<std::string> args) {
    CLI::App app{"Oncology attribute abstraction, case finding and curation service"};
    app.name("oncoabs");
    app.require_subcommand(1);
    std::function<void()> action;
    build(app, action);
    try {
      std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
      app.parse(args);
    } catch (const CLI::CallForHelp&) {
      out_ << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out_ << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitValidation;
    }
    try {
      action();
      return kExitOk;
    } catch (const MissingArtifactError& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitValidation;
    } catch (const ConfigError& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitValidation;
    } catch (const CLI::ValidationError& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitValidation;
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitRuntime;
    }
  }

 private:
  // -- helpers --------------------------------------------------------------

  static corpus::AttributeKind attribute_of(const std::string& s) {
    const auto a = corpus::try_parse_attribute(s);
    if (!a) throw ConfigError("attribute", "unknown attribute '" + s + "'");
    return *a;
  }

  static text::Window window_of(const std::string& s) {
    try {
      return text::parse_window(s);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("window", e.what());
    }
  }

  static corpus::KindSet kinds_of(const std::string& s) {
    try {
      return corpus::KindSet::parse(s);
    } catch (const std::exception& e) {
      throw ConfigError("kinds", e.what());
    }
  }

  static corpus::CorpusBundle load_corpus(const Common& c, Manifest* m = nullptr) {
    auto b = corpus::read_corpus(c.corpus);
    if (m) m->input(fs::path(c.corpus) / corpus::kPatientsFile);
    return b;
  }

  static text::Vocab load_vocab(const Common& c, Manifest* m = nullptr) {
    const auto p = fs::path(c.models) / kVocabFile;
    auto v = text::load_vocab(p);
    if (m) m->input(p);
    return v;
  }

  static train::Partitions partitions(const corpus::CorpusBundle& b, const Common& c) {
    return train::partition_patients(b.patients, train::six_fold_plan(), c.fold_seed);
  }

  static train::AbstractionInputs inputs(const corpus::CorpusBundle& b, const Common& c) {
    const auto a = attribute_of(c.attribute);
    return {b.label_spaces[corpus::index(a)], window_of(c.window), kinds_of(c.kinds)};
  }

  static const corpus::Patient& find_patient(const corpus::CorpusBundle& b, const std::string& id) {
    for (const auto& p : b.patients)
      if (p.patient_id == id) return p;
    throw ConfigError("patient", "no patient '" + id + "' in the corpus");
  }

  void print(const ojson& j) { out_ << j.dump(2) << "\n"; }

  static std::string casefind_file(const train::CaseFindingScheme& s) {
    return "casefind." + std::string(s.tag()) + ".ckpt";
  }

  // -- subcommands ----------------------------------------------------------

  void build(CLI::App& app, std::function<void()>& action) {
    gen_corpus(app, action);
    build_vocab(app, action);
    pretrain(app, action);
    train_cmd(app, action);
    eval_cmd(app, action);
    ablate(app, action);
    case_find(app, action);
    infer(app, action);
    explain(app, action);
    serve(app, action);
    report(app, action);
  }

  void gen_corpus(CLI::App& app, std::function<void()>& action) {
    auto* c = app.add_subcommand("gen-corpus", "Generate a synthetic EMR corpus");
    auto cfg = std::make_shared<corpus::GeneratorConfig>();
    cfg->n_cancer_patients = 3000;
    cfg->n_control_patients = 600;
    cfg->n_site_classes = 12;
    auto out = std::make_shared<std::string>("corpus");
    c->add_option("--seed", cfg->seed, "Generator seed")->capture_default_str();
    c->add_option("--cancer", cfg->n_cancer_patients, "Registry (cancer) patients")->capture_default_str();
    c->add_option("--control", cfg->n_control_patients, "Non-cancer control patients")->capture_default_str();
    c->add_option("--sites", cfg->n_site_classes, "Site classes")->capture_default_str();
    c->add_option("--histologies", cfg->n_histology_classes, "Histology classes")->capture_default_str();
    c->add_option("--cross-doc", cfg->cross_doc_fraction, "Fraction of patients with site evidence split across documents")
        ->capture_default_str();
    c->add_option("--negation-rate", cfg->negation_rate, "Per-slot rate of negated other-site mentions")->capture_default_str();
    c->add_option("--variation-rate", cfg->variation_rate, "Rate of paraphrases outside the lexicon")->capture_default_str();
    c->add_option("--swap-rate", cfg->role_swap_rate, "Rate of order-dependent two-site sentences")->capture_default_str();
    c->add_option("--late-resection", cfg->late_resection_rate, "Rate of resections 31-90 days after diagnosis")
        ->capture_default_str();
    c->add_option("--pool", cfg->n_pretrain_notes, "Unlabeled notes for pretraining")->capture_default_str();
    c->add_option("--out", *out, "Output directory")->capture_default_str();
    c->callback([&action, cfg, out, this] {
      action = [cfg, out, this] {
        Manifest m("gen-corpus");
        m.seed = cfg->seed;
        corpus::validate(*cfg);
        const auto b = corpus::generate_corpus(*cfg);
        fs::create_directories(*out);
        for (const auto& [file, hash] : corpus::write_corpus(*out, b)) m.output(fs::path(*out) / file);
        m.config = corpus::to_json(*cfg);
        m.write(*out);
        const auto st = corpus::corpus_stats(b.patients);
        print({{"out", *out}, {"patients", st.n_patients}, {"registry", st.n_registry}, {"control", st.n_control},
               {"pool_notes", b.pretrain_pool.size()}, {"corpus_hash", hex64(corpus::corpus_hash(b))}});
      };
    });
  }

  void build_vocab(CLI::App& app, std::function<void()>& action) {
    auto* c = app.add_subcommand("build-vocab", "Learn the subword vocabulary from corpus and pool texts");
    auto o = std::make_shared<Common>();
    auto size = std::make_shared<std::size_t>(2000);
    add_common(c, *o);
    c->add_option("--size", *size, "Target vocabulary size")->capture_default_str();
    c->callback([&action, o, size, this] {
      action = [o, size, this] {
        if (*size <= text::kSpecialCount) throw ConfigError("size", "must exceed the special-token count");
        Manifest m("build-vocab");
        const auto b = load_corpus(*o, &m);
        std::vector<std::string> texts;
        for (const auto& p : b.patients)
          for (const auto& d : p.documents) texts.push_back(d.text);
        for (const auto& n : b.pretrain_pool) texts.push_back(n.text);
        const auto v = text::learn_vocab(texts, *size);
        fs::create_directories(o->models);
        const auto path = fs::path(o->models) / kVocabFile;
        text::save_vocab(path, v);
        m.output(path);
        m.config = {{"size", *size}};
        m.write(path);
        print({{"vocab", path.string()}, {"units", v.size()}, {"hash", hex64(v.hash())}});
      };
    });
  }

  void pretrain(CLI::App& app, std::function<void()>& action) {
    auto* c = app.add_subcommand("pretrain", "Masked-language-model pretraining of the transformer encoder");
    auto o = std::make_shared<Common>();
    auto mf = std::make_shared<ModelFlags>();
    auto pc = std::make_shared<train::PretrainConfig>();
    mf->encoder = "transformer";
    mf->dim = 64;
    add_common(c, *o);
    c->add_option("--dim", mf->dim, "Embedding width")->capture_default_str();
    c->add_option("--layers", mf->layers, "Transformer layers")->capture_default_str();
    c->add_option("--heads", mf->heads, "Transformer heads")->capture_default_str();
    c->add_option("--steps", pc->steps, "Optimizer steps")->capture_default_str();
    c->add_option("--batch", pc->batch_size, "Notes per step")->capture_default_str();
    c->add_option("--lr", pc->lr, "Adam learning rate")->capture_default_str();
    c->add_option("--mask-rate", pc->mask_rate, "Fraction of tokens selected for prediction")->capture_default_str();
    c->callback([&action, o, mf, pc, this] {
      action = [o, mf, pc, this] {
        Manifest m("pretrain");
        m.seed = o->seed;
        const auto b = load_corpus(*o, &m);
        const auto v = load_vocab(*o, &m);
        if (b.pretrain_pool.empty()) throw EmptyInputError("corpus has no pretraining pool (gen-corpus --pool)");
        std::vector<text::TokenSequence> pool;
        for (const auto& n : b.pretrain_pool) pool.push_back(train::note_input(n, v));
        auto mc = mf->model_config();
        mc.vocab_size = v.size();
        auto cfg = *pc;
        cfg.seed = o->seed;
        const auto r = train::pretrain_encoder<float>(cfg, mc, pool);
        model::CheckpointMeta meta;
        meta.config = r.model.config();
        meta.vocab_hash = v.hash();
        meta.encoder_only = true;
        ojson log = ojson::array();
        for (const auto& [step, loss] : r.loss_log) log.push_back({{"step", step}, {"loss", loss}});
        meta.extra = {{"mlm_loss", log}};
        const auto path = fs::path(o->models) / kPretrainedFile;
        model::save_checkpoint(path, r.model, meta);
        m.output(path);
        m.config = {{"model", mf->json()}, {"steps", cfg.steps}, {"batch", cfg.batch_size}, {"lr", cfg.lr},
                    {"mask_rate", cfg.mask_rate}};
        m.write(path);
        print({{"checkpoint", path.string()}, {"first_loss", r.loss_log.front().second}, {"last_loss", r.loss_log.back().second}});
      };
    });
  }

  void train_cmd(CLI::App& app, std::function<void()>& action) {
    auto* c = app.add_subcommand("train", "Train an attribute classifier (han) or the bag-of-words baseline (bow)");
    auto o = std::make_shared<Common>();
    auto mf = std::make_shared<ModelFlags>();
    auto kind = std::make_shared<std::string>("han");
    auto pretrained = std::make_shared<bool>(false);
    auto bow_iters = std::make_shared<std::size_t>(300);
    add_common(c, *o);
    add_data(c, *o);
    add_model(c, *mf);
    c->add_option("--model", *kind, "han or bow")->capture_default_str()->check(CLI::IsMember({"han", "bow"}));
    c->add_flag("--pretrained", *pretrained, "Initialize the encoder from the pretrain checkpoint");
    c->add_option("--bow-iterations", *bow_iters, "Full-batch iterations of the BOW model")->capture_default_str();
    c->callback([&action, o, mf, kind, pretrained, bow_iters, this] {
      action = [o, mf, kind, pretrained, bow_iters, this] {
        Manifest m("train");
        m.seed = o->seed;
        const auto b = load_corpus(*o, &m);
        const auto in = inputs(b, *o);
        const auto parts = partitions(b, *o);
        const std::string attr(corpus::slug(in.space.attribute));
        m.config = {{"attribute", attr}, {"window", text::to_string(in.window)}, {"kinds", in.kinds.to_string()},
                    {"fold_seed", o->fold_seed}, {"model", *kind}};
        if (*kind == "bow") {
          baselines::BowConfig bc;
          bc.iterations = *bow_iters;
          bc.seed = o->seed;
          auto tr = baselines::bow_examples(parts.train, in.space, in.window, in.kinds);
          const auto r = baselines::bow_train(tr, in.space, bc);
          const auto path = fs::path(o->models) / baselines::bow_filename(attr);
          fs::create_directories(o->models);
          baselines::save_bow(path, r.model);
          m.output(path);
          m.config["bow_iterations"] = *bow_iters;
          m.write(path);
          print({{"checkpoint", path.string()}, {"words", r.model.words.size()},
                 {"final_objective", r.objective_log.empty() ? 0.0 : r.objective_log.back()}});
          return;
        }
        const auto v = load_vocab(*o, &m);
        std::optional<model::LoadedCheckpoint> init;
        if (*pretrained) {
          const auto p = fs::path(o->models) / kPretrainedFile;
          if (!fs::exists(p)) throw MissingArtifactError("pretrained encoder " + p.string(), "pretrain");
          init = model::load_checkpoint(p);
          m.input(p);
        }
        auto mc = mf->model_config();
        if (init) {  // the encoder shape comes from the pretrained checkpoint
          mc.embed_dim = init->meta.config.embed_dim;
          mc.ff_dim = init->meta.config.ff_dim;
          mc.layers = init->meta.config.layers;
          mc.heads = init->meta.config.heads;
          mc.encoder = init->meta.config.encoder;
        }
        const auto tc = mf->train_config(o->seed);
        auto log = [this](const train::EpochRecord& e) {
          err_ << "epoch " << e.epoch << " loss " << std::fixed << std::setprecision(4) << e.train_loss << " dev "
               << e.dev_metric << (e.improved ? " *" : "") << "\n";
        };
        auto r = train::run_abstraction<float>(parts, in, v, mc, tc, init ? &*init : nullptr, log);
        model::CheckpointMeta meta;
        meta.config = r.training.model.config();
        meta.vocab_hash = v.hash();
        meta.attribute = attr;
        meta.labels = in.space.classes;
        meta.extra = {{"window", text::to_string(in.window)},
                      {"kinds", in.kinds.to_string()},
                      {"fold_seed", o->fold_seed},
                      {"pretrained", *pretrained},
                      {"history", train::history_json(r.training.history, r.training.best_epoch,
                                                      r.training.best_dev_metric, r.training.stop_reason)}};
        const auto path = fs::path(o->models) / model::checkpoint_filename(attr, meta.config.encoder);
        model::save_checkpoint(path, r.training.model, meta);
        m.output(path);
        m.config["model_config"] = mf->json();
        m.config["pretrained"] = *pretrained;
        m.write(path);
        print({{"checkpoint", path.string()}, {"best_epoch", r.training.best_epoch},
               {"best_dev_auprc", r.training.best_dev_metric}, {"test_auprc", r.test.auprc}});
      };
    });
  }

  void eval_cmd(CLI::App& app, std::function<void()>& action) {
    auto* c = app.add_subcommand("eval", "Evaluate a trained model or the ontology baseline on the test partition");
    auto o = std::make_shared<Common>();
    auto kind = std::make_shared<std::string>("han");
    auto encoder = std::make_shared<std::string>("context-free");
    add_common(c, *o);
    add_data(c, *o);
    c->add_option("--model", *kind, "han, bow or ontology")->capture_default_str()->check(CLI::IsMember({"han", "bow", "ontology"}));
    c->add_option("--encoder", *encoder, "Encoder of the han checkpoint")->capture_default_str();
    c->callback([&action, o, kind, encoder, this] {
      action = [o, kind, encoder, this] {
        Manifest m("eval");
        const auto b = load_corpus(*o, &m);
        auto in = inputs(b, *o);
        const auto parts = partitions(b, *o);
        const std::string attr(corpus::slug(in.space.attribute));
        std::string label = *kind;
        evalx::MetricsReport report;
        if (*kind == "ontology") {
          const auto& lex = b.lexicon[corpus::index(in.space.attribute)];
          report = train::run_ontology(parts, in, lex);
        } else if (*kind == "bow") {
          const auto path = fs::path(o->models) / baselines::bow_filename(attr);
          const auto bm = baselines::load_bow(path);
          m.input(path);
          report = train::evaluate_bow(bm, baselines::bow_examples(parts.test, in.space, in.window, in.kinds), in.space);
        } else {
          const auto v = load_vocab(*o, &m);
          const auto enc = model::parse_encoder(*encoder);
          const auto path = fs::path(o->models) / model::checkpoint_filename(attr, enc);
          if (!fs::exists(path)) throw MissingArtifactError("checkpoint " + path.string(), "train --attribute " + attr);
          const auto ck = model::load_checkpoint(path);
          m.input(path);
          const auto net = model::model_from_checkpoint<float>(ck, v.hash());
          auto te = train::build_abstraction_dataset(parts.test, in.space, in.window, in.kinds, v).examples;
          report = evalx::evaluate_multiclass(train::predict_all(net, te), train::labels_of(te), in.space.classes);
          label = "han-" + std::string(model::name(enc)) + (ck.meta.extra.value("pretrained", false) ? "-pretrained" : "");
        }
        ojson j;
        j["kind"] = "abstraction";
        j["attribute"] = attr;
        j["model"] = label;
        j["window"] = text::to_string(in.window);
        j["kinds"] = in.kinds.to_string();
        j["metrics"] = evalx::to_json(report);
        fs::create_directories(o->models);
        const auto path = fs::path(o->models) / ("metrics." + attr + "." + label + ".json");
        write_file(path, j.dump(2) + "\n");
        m.output(path);
        m.config = {{"attribute", attr}, {"model", *kind}, {"window", text::to_string(in.window)},
                    {"kinds", in.kinds.to_string()}, {"fold_seed", o->fold_seed}};
        m.write(path);
        print({{"metrics", path.string()}, {"auprc", report.auprc}, {"auroc", report.auroc}, {"accuracy", report.accuracy}});
      };
    });
  }

  void ablate(CLI::App& app, std::function<void()>& action) {
    auto* c = app.add_subcommand("ablate", "Train and compare variants differing in document kinds or window");
    auto o = std::make_shared<Common>();
    auto mf = std::make_shared<ModelFlags>();
    auto variants = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>("ablation");
    add_common(c, *o);
    add_data(c, *o);
    add_model(c, *mf);
    c->add_option("--variant", *variants, "kinds@window, e.g. path@-30:30 (repeat; at least two)")->required();
    c->add_option("--out", *out, "Output directory")->capture_default_str();
    c->callback([&action, o, mf, variants, out, this] {
      action = [o, mf, variants, out, this] {
        Manifest m("ablate");
        m.seed = o->seed;
        const auto b = load_corpus(*o, &m);
        const auto v = load_vocab(*o, &m);
        const auto a = attribute_of(o->attribute);
        const auto parts = partitions(b, *o);
        std::vector<evalx::AblationVariant> vs;
        for (const auto& s : *variants) {
          const auto at = s.find('@');
          if (at == std::string::npos) throw ConfigError("variant", "expected kinds@window, got '" + s + "'");
          vs.push_back({kinds_of(s.substr(0, at)), window_of(s.substr(at + 1))});
        }
        const auto result = evalx::run_ablation(a, vs, [&](const evalx::AblationVariant& var) {
          err_ << "variant " << var.label() << "\n";
          return train::run_abstraction<float>(parts, {b.label_spaces[corpus::index(a)], var.window, var.kinds}, v,
                                               mf->model_config(), mf->train_config(o->seed))
              .test;
        });
        fs::create_directories(*out);
        const fs::path dir(*out);
        write_file(dir / "ablation.tsv", evalx::ablation_tsv(result));
        write_file(dir / "deltas.tsv", evalx::deltas_tsv(result));
        ojson j = evalx::to_json(result);
        j["kind"] = "ablation";
        write_file(dir / "ablation.json", j.dump(2) + "\n");
        for (const char* f : {"ablation.tsv", "deltas.tsv", "ablation.json"}) m.output(dir / f);
        m.config = {{"attribute", std::string(corpus::slug(a))}, {"variants", *variants}, {"model", mf->json()},
                    {"fold_seed", o->fold_seed}};
        m.write(dir);
        out_ << evalx::ablation_tsv(result);
      };
    });
  }

  void case_find(CLI::App& app, std::function<void()>& action) {
    auto* c = app.add_subcommand("case-find", "Registry case finding: train or eval");
    c->require_subcommand(1);
    for (const std::string mode : {"train", "eval"}) {
      auto* s = c->add_subcommand(mode, mode == "train" ? "Train the day-level classifier" : "Patient-level evaluation");
      auto o = std::make_shared<Common>();
      auto mf = std::make_shared<ModelFlags>();
      auto scheme = std::make_shared<std::string>("default");
      auto cutoff = std::make_shared<int>(30);
      add_common(s, *o);
      s->add_option("--fold-seed", o->fold_seed, "Seed of the patient fold assignment")->capture_default_str();
      s->add_option("--scheme", *scheme, "default or hard-negatives")->capture_default_str();
      if (mode == "train") {
        add_model(s, *mf);
        s->add_option("--cutoff", *cutoff, "Hard negatives come from days more than this many days before diagnosis")
            ->capture_default_str();
      }
      s->callback([&action, o, mf, scheme, cutoff, mode, this] {
        action = [o, mf, scheme, cutoff, mode, this] {
          auto sch = train::CaseFindingScheme::parse(*scheme);
          sch.hard_cutoff_days = *cutoff;
          Manifest m("case-find-" + mode);
          m.seed = o->seed;
          const auto b = load_corpus(*o, &m);
          const auto v = load_vocab(*o, &m);
          const auto parts = partitions(b, *o);
          const auto path = fs::path(o->models) / casefind_file(sch);
          m.config = {{"scheme", std::string(sch.tag())}, {"fold_seed", o->fold_seed}};
          if (mode == "train") {
            auto log = [this](const train::EpochRecord& e) {
              err_ << "epoch " << e.epoch << " loss " << e.train_loss << " dev " << e.dev_metric << "\n";
            };
            const auto r = train::run_casefinding<float>(parts, sch, v, mf->model_config(), mf->train_config(o->seed), log);
            model::CheckpointMeta meta;
            meta.config = r.training.model.config();
            meta.vocab_hash = v.hash();
            meta.attribute = "case-finding";
            meta.labels = {"negative", "positive"};
            meta.extra = {{"scheme", std::string(sch.tag())}, {"threshold", r.threshold}, {"fold_seed", o->fold_seed},
                          {"hard_negatives", r.train_set.n_hard_negative}};
            model::save_checkpoint(path, r.training.model, meta);
            m.output(path);
            m.config["model"] = mf->json();
            m.config["cutoff"] = *cutoff;
            m.write(path);
            print({{"checkpoint", path.string()}, {"threshold", r.threshold}, {"test_f1", r.test.f1}});
            return;
          }
          if (!fs::exists(path)) throw MissingArtifactError("checkpoint " + path.string(), "case-find train --scheme " + *scheme);
          const auto ck = model::load_checkpoint(path);
          m.input(path);
          const auto net = model::model_from_checkpoint<float>(ck, v.hash());
          const double thr = ck.meta.extra.at("threshold").get<double>();
          const auto outcome = evalx::casefinding_patient_eval(train::casefinding_scores(net, parts.test, v), thr);
          ojson j;
          j["kind"] = "casefinding";
          j["scheme"] = std::string(sch.tag());
          j["outcome"] = evalx::to_json(outcome);
          const auto mpath = fs::path(o->models) / ("metrics.casefind." + std::string(sch.tag()) + ".json");
          write_file(mpath, j.dump(2) + "\n");
          m.output(mpath);
          m.write(mpath);
          print({{"metrics", mpath.string()}, {"precision", outcome.precision}, {"recall", outcome.recall},
                 {"f1", outcome.f1}, {"window", "[-7, 30]"}});
        };
      });
    }
  }

  void infer(CLI::App& app, std::function<void()>& action) {
    auto* c = app.add_subcommand("infer", "Predict every attribute with an installed checkpoint for one patient");
    auto o = std::make_shared<Common>();
    auto patient = std::make_shared<std::string>();
    add_common(c, *o);
    c->add_option("--patient", *patient, "Patient id")->required();
    c->callback([&action, o, patient, this] {
      action = [o, patient, this] {
        const auto b = load_corpus(*o);
        const auto& p = find_patient(b, *patient);
        const auto pred = service::load_model_predictor(o->models);
        ojson rows = ojson::array();
        for (auto a : corpus::kAllAttributes) {
          const auto x = pred(p, a);
          ojson top = ojson::array();
          for (const auto& t : x.top) top.push_back({{"code", t.code}, {"probability", t.probability}});
          rows.push_back({{"attribute", std::string(corpus::slug(a))}, {"predicted", x.predicted}, {"top", top}, {"model", x.model}});
        }
        print({{"patient_id", p.patient_id}, {"extractions", rows}});
      };
    });
  }

  void explain(CLI::App& app, std::function<void()>& action) {
    auto* c = app.add_subcommand("explain", "Top-k attended sentences and words behind one prediction");
    auto o = std::make_shared<Common>();
    auto patient = std::make_shared<std::string>();
    auto k = std::make_shared<std::size_t>(3);
    auto encoder = std::make_shared<std::string>("context-free");
    add_common(c, *o);
    c->add_option("--patient", *patient, "Patient id")->required();
    c->add_option("--attribute", o->attribute, "Attribute")->capture_default_str();
    c->add_option("--encoder", *encoder, "Encoder of the checkpoint")->capture_default_str();
    c->add_option("-k,--top", *k, "Sentences to return")->capture_default_str();
    c->callback([&action, o, patient, k, encoder, this] {
      action = [o, patient, k, encoder, this] {
        if (*k < 1) throw ConfigError("k", "must be at least 1");
        const auto b = load_corpus(*o);
        const auto& p = find_patient(b, *patient);
        const auto v = load_vocab(*o);
        const auto a = attribute_of(o->attribute);
        const auto path = fs::path(o->models) / model::checkpoint_filename(corpus::slug(a), model::parse_encoder(*encoder));
        const auto ck = model::load_checkpoint(path);
        const auto net = model::model_from_checkpoint<float>(ck, v.hash());
        const auto window = text::parse_window(ck.meta.extra.value("window", std::string("-30:30")));
        const auto kinds = corpus::KindSet::parse(ck.meta.extra.value("kinds", std::string("path,rad,op")));
        const auto seq = text::assemble_input(p, window, service::anchor_day(p), kinds, v, text::kDefaultMaxSentences, a);
        const auto pred = net.predict(seq);
        auto r = rationale::extract_rationale(pred, seq, std::min(*k, seq.sentence_count()));
        rationale::attach_text(r, p);
        if (!rationale::spans_verified(r, p)) throw std::runtime_error("rationale spans do not match the documents");
        print({{"patient_id", p.patient_id},
               {"attribute", std::string(corpus::slug(a))},
               {"predicted", ck.meta.labels.at(pred.predicted)},
               {"probability", pred.probabilities[pred.predicted]},
               {"rationale", rationale::to_json(r)}});
      };
    });
  }

  void serve(CLI::App& app, std::function<void()>& action) {
    auto* c = app.add_subcommand("serve", "Curation HTTP service");
    auto o = std::make_shared<Common>();
    auto host = std::make_shared<std::string>("127.0.0.1");
    auto port = std::make_shared<int>(8080);
    auto log = std::make_shared<std::string>("curation/events.jsonl");
    auto scope = std::make_shared<std::string>("test");
    add_common(c, *o);
    c->add_option("--fold-seed", o->fold_seed, "Seed of the patient fold assignment")->capture_default_str();
    c->add_option("--host", *host, "Bind address")->capture_default_str()->envname("ONCOABS_HOST");
    c->add_option("--port", *port, "Port")->capture_default_str()->envname("ONCOABS_PORT")->check(CLI::Range(1, 65535));
    c->add_option("--log", *log, "Event log path")->capture_default_str()->envname("ONCOABS_EVENT_LOG");
    c->add_option("--patients", *scope, "Patients to queue: test or all")->capture_default_str()->check(CLI::IsMember({"test", "all"}));
    c->callback([&action, o, host, port, log, scope, this] {
      action = [o, host, port, log, scope, this] {
        const auto b = load_corpus(*o);
        auto patients = *scope == "all" ? b.patients : partitions(b, *o).test;
        const std::string models = o->models;
        service::CurationStore store(std::move(patients), b.label_spaces, service::load_model_predictor(models), *log);
        service::CurationServer server(store, [models] { return service::Predictor(service::load_model_predictor(models)); });
        err_ << "serving " << store.item_count() << " extractions on http://" << *host << ":" << *port << "\n";
        if (!server.listen(*host, *port)) throw std::runtime_error("cannot listen on " + *host + ":" + std::to_string(*port));
      };
    });
  }

  void report(CLI::App& app, std::function<void()>& action) {
    auto* c = app.add_subcommand("report", "Render metrics files as markdown tables");
    auto files = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();
    c->add_option("metrics", *files, "metrics.*.json or ablation.json files")->required();
    c->add_option("--out", *out, "Write the report here as well as to stdout");
    c->callback([&action, files, out, this] {
      action = [files, out, this] {
        std::vector<nlohmann::json> docs;
        for (const auto& f : *files) {
          if (!fs::exists(f)) throw MissingArtifactError("metrics file " + f, "eval");
          docs.push_back(corpus::read_json(f));
        }
        const auto md = render_report(docs);
        if (!out->empty()) write_file(*out, md);
        out_ << md;
      };
    });
  }

 public:
  /// Markdown tables for abstraction, case-finding and ablation results.
  static std::string render_report(const std::vector<nlohmann::json>& docs) {
    auto pct = [](double v) {
      std::ostringstream o;
      o << std::fixed << std::setprecision(1) << 100.0 * v;
      return o.str();
    };
    std::string abs, cf, abl;
    for (const auto& d : docs) {
      const auto kind = d.value("kind", std::string());
      if (kind == "abstraction") {
        const auto& m = d.at("metrics");
        abs += "| " + d.at("attribute").get<std::string>() + " | " + d.at("model").get<std::string>() + " | " +
               d.at("window").get<std::string>() + " | " + d.at("kinds").get<std::string>() + " | " +
               std::to_string(m.at("n_instances").get<std::size_t>()) + " | " + pct(m.at("auprc")) + " | " +
               pct(m.at("auroc")) + " | " + pct(m.at("accuracy")) + " |\n";
      } else if (kind == "casefinding") {
        const auto& o = d.at("outcome");
        cf += "| " + d.at("scheme").get<std::string>() + " | " + pct(o.at("precision")) + " | " + pct(o.at("recall")) +
              " | " + pct(o.at("f1")) + " |\n";
      } else if (kind == "ablation") {
        for (const auto& v : d.at("variants"))
          abl += "| " + d.at("attribute").get<std::string>() + " | " + v.at("kinds").get<std::string>() + " | " +
                 v.at("window").get<std::string>() + " | " + pct(v.at("metrics").at("auprc")) + " |\n";
      } else {
        throw FormatError("not a metrics file (kind '" + kind + "')");
      }
    }
    std::string md;
    if (!abs.empty())
      md += "## Abstraction (test partition, macro one-vs-rest)\n\n| attribute | model | window | kinds | n | AUPRC | AUROC | accuracy |\n"
            "|---|---|---|---|---|---|---|---|\n" + abs + "\n";
    if (!cf.empty())
      md += "## Case finding (patient level, first flag within [-7, 30] days)\n\n| scheme | precision | recall | F1 |\n"
            "|---|---|---|---|\n" + cf + "\n";
    if (!abl.empty())
      md += "## Ablation\n\n| attribute | kinds | window | AUPRC |\n|---|---|---|---|\n" + abl + "\n";
    return md;
  }

 private:
  std::ostream& out_;
  std::ostream& err_;
};

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return App(std::cout, std::cerr).run(std::move(args));
}

}  // namespace oncoabs::cli
