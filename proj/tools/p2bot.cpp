// Copyright 2026 The P2Bot Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// p2bot command-line driver.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "p2bot/corpus/parse.hpp"
#include "p2bot/corpus/probe.hpp"
#include "p2bot/corpus/synthetic.hpp"
#include "p2bot/metrics/evaluate.hpp"
#include "p2bot/receiver/train.hpp"
#include "p2bot/selfplay/selfplay.hpp"
#include "p2bot/service/server.hpp"
#include "p2bot/transmitter/train.hpp"

namespace {

using namespace p2bot;
using nlohmann::json;
using Real = float;

struct ModelFlags {
  int layers = 2;
  int dim = 128;
  int heads = 4;
  int max_positions = 256;

  void add(CLI::App* app) {
    app->add_option("--layers", layers, "transformer blocks")->capture_default_str();
    app->add_option("--dim", dim, "model width")->capture_default_str();
    app->add_option("--heads", heads, "attention heads")->capture_default_str();
    app->add_option("--max-positions", max_positions, "maximum input length")->capture_default_str();
  }

  nn::SequenceModelConfig config() const {
    nn::SequenceModelConfig c;
    c.num_layers = layers;
    c.model_dim = dim;
    c.num_heads = heads;
    c.max_positions = max_positions;
    return c;
  }
};

struct DecodeFlags {
  int beam = 2;
  double alpha = 0.1;
  int max_steps = 32;

  void add(CLI::App* app) {
    app->add_option("--beam", beam, "beam size")->capture_default_str();
    app->add_option("--alpha", alpha, "weight of the length-normalized LM score")->capture_default_str();
    app->add_option("--max-steps", max_steps, "decoding cap in tokens")->capture_default_str();
  }

  transmitter::DecodeParams params() const {
    transmitter::DecodeParams p;
    p.beam_size = beam;
    p.alpha = alpha;
    p.max_steps = max_steps;
    return p;
  }
};

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  std::string data;
  std::string format = "auto";
  std::string output;
  std::string transmitter;
  std::string receiver;
  std::string ckpt_dir;
  std::string log;
  std::string agent;
  ModelFlags model;
  DecodeFlags decode;

  // prepare-data / synthesize
  int min_freq = 1;
  std::string vocab_out;
  int personas = 64;
  int turns = 3;
  int candidates = 20;

  // training
  int epochs = 2;
  int batch_size = 8;
  double lr = 6.25e-5;
  double mle_weight = 1.0;
  double nup_weight = 1.0;
  std::string sides = "both";
  bool linear_decay = false;
  double margin = 0.4;
  double l1 = 1e-4;
  double tau_start = 10.0;
  double tau_end = 0.5;

  // self-play
  int dialogues = 2000;
  double gamma = 0.5;
  double lambda1 = 0.4;
  double lambda2 = 0.1;
  double lambda3 = 0.5;
  double tau = 0.5;

  // evaluate / probe
  std::string rank = "combined";
  std::string responder = "B";
  bool no_generate = false;
  bool rows = false;
  int distractors = 31;

  // generate / chat / serve
  std::vector<std::string> persona;
  std::vector<std::string> history;
  std::string mode = "beam_rank";
  bool perception = false;
  std::string host = "0.0.0.0";
  int port = 8080;
  std::string log_dir;
};

// Reads "train-transmitter": {...} (or top-level keys) from the config file
// into every option of `sub` that was not given on the command line.
void apply_config(CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file '" + path + "'");
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("config file '" + path + "': " + e.what());
  }
  if (!cfg.is_object()) throw InvalidArgument("config file must hold a JSON object");
  const json section = cfg.contains(sub->get_name()) ? cfg[sub->get_name()] : cfg;
  for (CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (opt->count() > 0 || name == "config" || name == "help") continue;
    const std::string key = section.contains(name) ? name : CLI::detail::join(CLI::detail::split(name, '-'), "_");
    if (!section.contains(key)) continue;
    const json& v = section[key];
    auto text = [](const json& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
    if (v.is_array()) {
      std::vector<std::string> items;
      for (const auto& x : v) items.push_back(text(x));
      opt->add_result(items);
    } else if (v.is_boolean()) {
      if (!v.get<bool>()) continue;
      opt->add_result("true");
    } else {
      opt->add_result(text(v));
    }
    opt->run_callback();
  }
}

corpus::CorpusFormat guess_format(const std::string& path, const std::string& format) {
  if (format != "auto") return corpus::parse_format(format);
  return path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl" ? corpus::CorpusFormat::kJsonl
                                                                      : corpus::CorpusFormat::kParlaiText;
}

std::vector<corpus::DialogueEpisode> load_corpus(const std::string& path, const std::string& format) {
  if (path.empty()) throw InvalidArgument("--data is required");
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open corpus '" + path + "'");
  auto episodes = corpus::parse_corpus(in, guess_format(path, format));
  if (episodes.empty()) throw InvalidArgument("corpus '" + path + "' holds no episodes");
  return episodes;
}

std::string checkpoint_path(const std::string& flag, const Options& o, const std::string& file) {
  std::string dir = o.ckpt_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("P2BOT_CKPT_DIR")) dir = env;
  }
  std::string path = flag;
  if (path.empty() && !dir.empty()) path = dir + "/" + file;
  if (path.empty()) throw InvalidArgument("no " + file + " given: pass a path or set P2BOT_CKPT_DIR");
  if (!std::filesystem::exists(path)) throw NotFound("checkpoint '" + path + "' does not exist");
  return path;
}

std::string output_path(const Options& o) {
  if (o.output.empty()) throw InvalidArgument("--output is required");
  return o.output;
}

class JsonlLog {
 public:
  explicit JsonlLog(const std::string& path) {
    if (path.empty()) return;
    out_.open(path);
    if (!out_) throw InvalidArgument("cannot write log '" + path + "'");
  }
  void write(const json& j) {
    if (out_.is_open()) out_ << j.dump() << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

corpus::ResponderSides parse_sides(const std::string& s) {
  if (s == "both") return corpus::ResponderSides::kBoth;
  if (s == "B" || s == "b") return corpus::ResponderSides::kBOnly;
  if (s == "A" || s == "a") return corpus::ResponderSides::kAOnly;
  throw InvalidArgument("--sides must be both, A or B");
}

// A single argument naming an existing file is read as one entry per line.
std::vector<std::string> lines_or_values(const std::vector<std::string>& values) {
  if (values.size() != 1 || !std::filesystem::is_regular_file(values.front())) return values;
  std::ifstream in(values.front());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!corpus::tokenize(line).empty()) out.push_back(line);
  }
  return out;
}

corpus::Persona persona_from(const std::vector<std::string>& profiles) {
  auto p = corpus::make_persona(lines_or_values(profiles));
  corpus::validate_persona(p);
  return p;
}

int cmd_prepare(const Options& o) {
  auto episodes = load_corpus(o.data, o.format);
  for (const auto& e : episodes) corpus::validate_episode(e);
  const auto vocab = corpus::build_vocab(episodes, o.min_freq);
  std::ofstream out(output_path(o));
  corpus::write_jsonl(out, episodes);
  if (!o.vocab_out.empty()) {
    std::ofstream v(o.vocab_out);
    for (const auto& t : vocab.tokens()) v << t << '\n';
  }
  std::cout << json{{"episodes", episodes.size()},
                    {"personas", corpus::distinct_personas(episodes).size()},
                    {"vocab_size", vocab.size()},
                    {"vocab_hash", vocab.hash()}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_synthesize(const Options& o) {
  corpus::SyntheticOptions so;
  so.num_candidates = o.candidates;
  const auto episodes = corpus::generate_synthetic(o.personas, o.turns, o.seed, so);
  std::ofstream out(output_path(o));
  corpus::write_jsonl(out, episodes);
  std::cout << json{{"episodes", episodes.size()}}.dump() << '\n';
  return 0;
}

int cmd_train_transmitter(const Options& o) {
  const auto episodes = load_corpus(o.data, o.format);
  transmitter::SupervisedConfig c;
  c.model = o.model.config();
  c.optimizer.learning_rate = o.lr;
  c.epochs = o.epochs;
  c.batch_size = o.batch_size;
  c.mle_weight = o.mle_weight;
  c.nup_weight = o.nup_weight;
  c.min_freq = o.min_freq;
  c.sides = parse_sides(o.sides);
  c.seed = o.seed;
  c.linear_decay = o.linear_decay;
  const std::string out = output_path(o);
  JsonlLog log(o.log);
  auto run = transmitter::train_supervised<Real>(episodes, c, [&](const transmitter::EpochLog& e) {
    json j = {{"epoch", e.epoch}, {"loss", e.loss}, {"mle", e.mle}, {"nup", e.nup}};
    std::cerr << j.dump() << '\n';
    log.write(j);
  });
  transmitter::save_transmitter(run.model, run.vocab, out);
  std::cout << json{{"checkpoint", out}, {"vocab_size", run.vocab.size()}}.dump() << '\n';
  return 0;
}

int cmd_train_receiver(const Options& o) {
  const auto episodes = load_corpus(o.data, o.format);
  receiver::ReceiverTrainConfig c;
  c.encoder = o.model.config();
  c.optimizer.learning_rate = o.lr;
  c.loss.margin = o.margin;
  c.loss.l1_weight = o.l1;
  c.loss.tau_start = o.tau_start;
  c.loss.tau_end = o.tau_end;
  c.loss.inference_tau = o.tau;
  c.epochs = o.epochs;
  c.batch_size = o.batch_size;
  c.min_freq = o.min_freq;
  c.seed = o.seed;
  const std::string out = output_path(o);
  JsonlLog log(o.log);
  auto run = receiver::train_receiver<Real>(episodes, c, [&](std::size_t step, double loss, double tau) {
    json j = {{"step", step}, {"loss", loss}, {"tau", tau}};
    log.write(j);
    if (step % 50 == 0) std::cerr << j.dump() << '\n';
  });
  receiver::save_receiver(run.model, run.vocab, out);
  std::cout << json{{"checkpoint", out}, {"vocab_size", run.vocab.size()}}.dump() << '\n';
  return 0;
}

int cmd_selfplay(const Options& o) {
  const auto episodes = load_corpus(o.data, o.format);
  auto [user, vocab] = transmitter::load_transmitter<Real>(checkpoint_path(o.transmitter, o, "transmitter.ckpt"));
  auto [rec, rvocab] = receiver::load_receiver<Real>(checkpoint_path(o.receiver, o, "receiver.ckpt"));
  selfplay::SelfPlayConfig c;
  c.num_dialogues = o.dialogues;
  c.turns = o.turns;
  c.gamma = o.gamma;
  c.lambdas = {o.lambda1, o.lambda2, o.lambda3};
  c.optimizer.learning_rate = o.lr;
  c.batch_size = o.batch_size;
  c.seed = o.seed;
  c.user_decode = o.decode.params();
  c.agent_max_steps = o.decode.max_steps;
  c.perception_tau = o.tau;
  const std::string out = output_path(o);
  JsonlLog log(o.log);
  auto agent = user;
  if (!o.agent.empty()) {
    if (!std::filesystem::exists(o.agent)) throw NotFound("checkpoint '" + o.agent + "' does not exist");
    agent = transmitter::load_transmitter<Real>(o.agent, &vocab).first;
  }
  const selfplay::PerceptionScorer<Real> scorer{rec, rvocab, vocab, c.perception_tau};
  selfplay::finetune(agent, user, user, scorer, vocab, episodes, c, [&](const selfplay::BatchLog& b) {
    log.write(b.to_json());
    std::cerr << b.to_json().dump() << '\n';
  });
  transmitter::save_transmitter(agent, vocab, out);
  std::cout << json{{"checkpoint", out}}.dump() << '\n';
  return 0;
}

int cmd_evaluate(const Options& o) {
  const auto episodes = load_corpus(o.data, o.format);
  auto [model, vocab] = transmitter::load_transmitter<Real>(checkpoint_path(o.transmitter, o, "transmitter.ckpt"));
  metrics::EvalOptions eo;
  eo.decode = o.decode.params();
  if (o.rank == "classifier") {
    eo.rank = metrics::RankMode::kClassifier;
  } else if (o.rank != "combined") {
    throw InvalidArgument("--rank must be combined or classifier");
  }
  if (o.responder == "A" || o.responder == "a") {
    eo.responder = corpus::Speaker::kA;
  } else if (o.responder != "B" && o.responder != "b") {
    throw InvalidArgument("--responder must be A or B");
  }
  eo.generate = !o.no_generate;
  eo.keep_rows = o.rows;
  const auto report = metrics::evaluate_transmitter(model, vocab, episodes, eo);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  const std::string text = report.to_json().dump(2);
  if (!o.output.empty()) std::ofstream(o.output) << text << '\n';
  std::cout << text << '\n';
  return 0;
}

int cmd_probe(const Options& o) {
  const auto episodes = load_corpus(o.data, o.format);
  auto [model, vocab] = receiver::load_receiver<Real>(checkpoint_path(o.receiver, o, "receiver.ckpt"));
  const auto set = corpus::build_probe_set(episodes, static_cast<std::size_t>(o.distractors), o.seed);
  const auto report = metrics::probe_receiver(model, vocab, set, o.tau);
  const json j = {{"hits_at_1", report.hits_at_1}, {"mrr", report.mrr}, {"items", report.items},
                  {"candidates", o.distractors + 1}};
  if (!o.output.empty()) std::ofstream(o.output) << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_generate(const Options& o) {
  auto [model, vocab] = transmitter::load_transmitter<Real>(checkpoint_path(o.transmitter, o, "transmitter.ckpt"));
  const auto persona = persona_from(o.persona);
  const auto ctx = transmitter::encode_context(vocab, persona.profiles, lines_or_values(o.history));
  auto params = o.decode.params();
  params.mode = transmitter::parse_decode_mode(o.mode);
  if (params.mode == transmitter::DecodeMode::kMultinomial) {
    std::mt19937_64 rng(o.seed);
    std::cout << vocab.decode(transmitter::sample_multinomial(model, ctx, params, rng).response()) << '\n';
  } else {
    const auto result = transmitter::decode_beam(model, ctx, params);
    std::cout << vocab.decode(result.best().response()) << '\n';
  }
  return 0;
}

std::shared_ptr<service::Engine<Real>> load_engine(const Options& o) {
  auto [model, vocab] = transmitter::load_transmitter<Real>(checkpoint_path(o.transmitter, o, "transmitter.ckpt"));
  auto [rec, rvocab] = receiver::load_receiver<Real>(checkpoint_path(o.receiver, o, "receiver.ckpt"));
  std::vector<corpus::Persona> personas;
  if (!o.data.empty()) personas = corpus::distinct_personas(load_corpus(o.data, o.format));
  return std::make_shared<service::Engine<Real>>(std::move(model), std::move(vocab), std::move(rec),
                                                  std::move(rvocab), std::move(personas), o.decode.params());
}

int cmd_chat(const Options& o) {
  service::SessionStore<Real> store(load_engine(o), o.log_dir, o.seed);
  service::CreateRequest req;
  if (!o.persona.empty()) req.bot_persona = persona_from(o.persona);
  const auto session = store.create(req);
  std::cout << "bot persona:\n";
  for (const auto& p : session.bot_persona.profiles) std::cout << "  " << p << '\n';
  std::string line;
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    if (corpus::tokenize(line).empty()) continue;
    const auto ex = store.post_message(session.id, line);
    std::cout << ex.reply << '\n';
    if (o.perception) {
      for (const auto* row : {&ex.human_row, &ex.bot_row}) {
        std::cout << "  [";
        for (std::size_t i = 0; i < row->size(); ++i) std::cout << (i ? " " : "") << (*row)[i];
        std::cout << "]\n";
      }
    }
  }
  return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const Options& o) {
  auto store = std::make_shared<service::SessionStore<Real>>(load_engine(o), o.log_dir, o.seed);
  const std::size_t restored = store->restore();
  httplib::Server server;
  service::register_routes(server, store);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  if (!server.bind_to_port(o.host, o.port)) throw Error("cannot listen on " + o.host + ":" + std::to_string(o.port));
  std::cerr << "listening on " << o.host << ":" << o.port << " (" << restored << " sessions restored)\n";
  server.listen_after_bind();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"p2bot: persona dialogue transmitter and receiver"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file; flags override it");
    sub->add_option("--seed", o.seed, "random seed")->capture_default_str();
  };
  auto data = [&](CLI::App* sub) {
    sub->add_option("--data,--in", o.data, "corpus file");
    sub->add_option("--format", o.format, "parlai_text, jsonl or auto")->capture_default_str();
  };
  auto ckpts = [&](CLI::App* sub, bool with_receiver) {
    sub->add_option(with_receiver ? "--transmitter,--user" : "--transmitter,--ckpt", o.transmitter,
                    "transmitter checkpoint");
    if (with_receiver) sub->add_option("--receiver", o.receiver, "receiver checkpoint");
    sub->add_option("--ckpt-dir", o.ckpt_dir, "checkpoint directory (default $P2BOT_CKPT_DIR)");
  };

  std::map<std::string, std::function<int(const Options&)>> handlers;

  auto* prep = app.add_subcommand("prepare-data", "parse, validate and normalize a corpus to JSONL");
  common(prep);
  data(prep);
  prep->add_option("--output,--out", o.output, "normalized JSONL output");
  prep->add_option("--min-freq", o.min_freq, "vocabulary frequency cutoff")->capture_default_str();
  prep->add_option("--vocab-out", o.vocab_out, "write the vocabulary, one token per line");
  handlers["prepare-data"] = cmd_prepare;

  auto* synth = app.add_subcommand("synthesize", "generate a synthetic persona corpus");
  common(synth);
  synth->add_option("--output,--out", o.output, "JSONL output");
  synth->add_option("--personas", o.personas, "number of personas")->capture_default_str();
  synth->add_option("--turns", o.turns, "exchanges per dialogue")->capture_default_str();
  synth->add_option("--candidates", o.candidates, "ranking candidates per responding turn")->capture_default_str();
  handlers["synthesize"] = cmd_synthesize;

  auto* tt = app.add_subcommand("train-transmitter", "supervised training with the next-utterance head");
  common(tt);
  data(tt);
  o.model.add(tt);
  tt->add_option("--output,--out", o.output, "checkpoint to write");
  tt->add_option("--epochs", o.epochs)->capture_default_str();
  tt->add_option("--batch-size", o.batch_size)->capture_default_str();
  tt->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  tt->add_option("--mle-weight", o.mle_weight)->capture_default_str();
  tt->add_option("--nup-weight", o.nup_weight)->capture_default_str();
  tt->add_option("--min-freq", o.min_freq)->capture_default_str();
  tt->add_option("--sides", o.sides, "responding speakers: both, A or B")->capture_default_str();
  tt->add_flag("--linear-decay", o.linear_decay, "decay the learning rate linearly to 0");
  tt->add_option("--log", o.log, "JSONL training log");
  handlers["train-transmitter"] = cmd_train_transmitter;

  auto* tr = app.add_subcommand("train-receiver", "train the persona receiver by negative sampling");
  common(tr);
  data(tr);
  o.model.add(tr);
  tr->add_option("--output,--out", o.output, "checkpoint to write");
  tr->add_option("--epochs", o.epochs)->capture_default_str();
  tr->add_option("--batch-size", o.batch_size)->capture_default_str();
  tr->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  tr->add_option("--margin", o.margin)->capture_default_str();
  tr->add_option("--l1", o.l1, "L1 weight on relevance entries")->capture_default_str();
  tr->add_option("--tau-start", o.tau_start)->capture_default_str();
  tr->add_option("--tau-end", o.tau_end)->capture_default_str();
  tr->add_option("--tau", o.tau, "inference temperature")->capture_default_str();
  tr->add_option("--min-freq", o.min_freq)->capture_default_str();
  tr->add_option("--log", o.log, "JSONL training log");
  handlers["train-receiver"] = cmd_train_receiver;

  auto* sp = app.add_subcommand("selfplay-finetune", "REINFORCE fine-tuning through self-play");
  common(sp);
  data(sp);
  ckpts(sp, true);
  o.decode.add(sp);
  sp->add_option("--output,--out", o.output, "fine-tuned transmitter checkpoint");
  sp->add_option("--agent", o.agent, "initial agent checkpoint (default: the user checkpoint)");
  sp->add_option("--dialogues", o.dialogues)->capture_default_str();
  sp->add_option("--turns", o.turns, "agent turns per dialogue")->capture_default_str();
  sp->add_option("--gamma", o.gamma, "discount")->capture_default_str();
  sp->add_option("--lambda1", o.lambda1, "language style weight")->capture_default_str();
  sp->add_option("--lambda2", o.lambda2, "coherence weight")->capture_default_str();
  sp->add_option("--lambda3", o.lambda3, "persona perception weight")->capture_default_str();
  sp->add_option("--lr", o.lr, "Adam learning rate")->default_val(1e-6);
  sp->add_option("--batch-size", o.batch_size)->capture_default_str();
  sp->add_option("--tau", o.tau, "receiver temperature")->capture_default_str();
  sp->add_option("--log", o.log, "JSONL reward log");
  handlers["selfplay-finetune"] = cmd_selfplay;

  auto* ev = app.add_subcommand("evaluate", "Hits@1, perplexity, F1 and BLEU on a corpus");
  common(ev);
  data(ev);
  ckpts(ev, false);
  o.decode.add(ev);
  ev->add_option("--rank", o.rank, "combined or classifier")->capture_default_str();
  ev->add_option("--responder", o.responder, "evaluated speaker, A or B")->capture_default_str();
  ev->add_flag("--no-generate", o.no_generate, "skip generation (no F1/BLEU)");
  ev->add_flag("--rows", o.rows, "include per-turn rows");
  ev->add_option("--output,--out,--report", o.output, "write the report here too");
  handlers["evaluate"] = cmd_evaluate;

  auto* pr = app.add_subcommand("probe-receiver", "persona probing: Hits@1 and MRR");
  common(pr);
  data(pr);
  pr->add_option("--receiver,--ckpt", o.receiver, "receiver checkpoint");
  pr->add_option("--ckpt-dir", o.ckpt_dir, "checkpoint directory (default $P2BOT_CKPT_DIR)");
  pr->add_option("--distractors", o.distractors)->capture_default_str();
  pr->add_option("--tau", o.tau)->capture_default_str();
  pr->add_option("--output,--out", o.output, "write the report here too");
  handlers["probe-receiver"] = cmd_probe;

  auto* gen = app.add_subcommand("generate", "one response for a persona and history");
  common(gen);
  ckpts(gen, false);
  o.decode.add(gen);
  gen->add_option("--persona", o.persona, "profile sentence (repeatable) or a file with one per line")->required();
  gen->add_option("--history", o.history, "prior utterance (repeatable, oldest first) or a file");
  gen->add_option("--mode", o.mode, "beam_rank or multinomial")->capture_default_str();
  handlers["generate"] = cmd_generate;

  auto* chat = app.add_subcommand("chat", "terminal chat session");
  common(chat);
  data(chat);
  ckpts(chat, true);
  o.decode.add(chat);
  chat->add_option("--persona", o.persona, "bot profile sentence (repeatable); random from --data otherwise");
  chat->add_flag("--perception", o.perception, "print perception rows after each exchange");
  chat->add_option("--log-dir", o.log_dir, "session log directory");
  handlers["chat"] = cmd_chat;

  auto* serve = app.add_subcommand("serve", "HTTP JSON API");
  common(serve);
  data(serve);
  ckpts(serve, true);
  o.decode.add(serve);
  serve->add_option("--host", o.host)->capture_default_str();
  serve->add_option("--port", o.port)->capture_default_str();
  serve->add_option("--log-dir", o.log_dir, "session logs; existing sessions are restored");
  handlers["serve"] = cmd_serve;

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!o.config.empty()) apply_config(sub, o.config);
    return handlers.at(sub->get_name())(o);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
