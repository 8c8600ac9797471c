// srave: command-line front end for the conversion engine.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "srave/audio.hpp"
#include "srave/container.hpp"
#include "srave/error.hpp"
#include "srave/losses.hpp"
#include "srave/model.hpp"
#include "srave/perturb.hpp"
#include "srave/pqmf.hpp"
#include "srave/speaker.hpp"
#include "srave/stream.hpp"

using nlohmann::json;
using namespace srave;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kInput = 2, kModel = 3, kInvariant = 4 };

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

std::string resolve_model_path(const std::string& flag) {
  const std::string path = flag.empty() ? env_or("SRAVE_MODEL", "") : flag;
  if (path.empty()) throw ModelError("no model given: pass --model or set SRAVE_MODEL");
  return path;
}

// A path to an embedding file, or a speaker id looked up in the store.
SpeakerEmbedding resolve_speaker(const std::string& spec, const std::string& store) {
  if (fs::is_regular_file(spec)) return load_embedding(spec);
  try {
    return SpeakerStore(store).get_speaker(spec);
  } catch (const InputError& e) {
    throw ModelError("cannot resolve speaker '" + spec + "': " + e.what());
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* type_name(BiquadType t) {
  switch (t) {
    case BiquadType::LowShelf: return "low_shelf";
    case BiquadType::HighShelf: return "high_shelf";
    default: return "peaking";
  }
}

BiquadType parse_type(const std::string& s) {
  if (s == "low_shelf") return BiquadType::LowShelf;
  if (s == "peaking") return BiquadType::Peaking;
  if (s == "high_shelf") return BiquadType::HighShelf;
  throw InputError("unknown biquad type '" + s + "'");
}

json params_json(const PerturbParams& p) {
  json peq = json::array();
  for (const auto& s : p.peq) {
    peq.push_back({{"type", type_name(s.type)}, {"freq_hz", s.freq_hz}, {"q", s.q}, {"gain_db", s.gain_db}});
  }
  return {{"pitch_ratio", p.pitch_ratio}, {"formant_ratio", p.formant_ratio}, {"peq", peq}};
}

PerturbParams params_from_json(const json& j, PerturbParams p) {
  try {
    if (j.contains("pitch_ratio")) p.pitch_ratio = j.at("pitch_ratio").get<double>();
    if (j.contains("formant_ratio")) p.formant_ratio = j.at("formant_ratio").get<double>();
    if (j.contains("peq")) {
      p.peq.clear();
      for (const auto& s : j.at("peq")) {
        p.peq.push_back({parse_type(s.value("type", "peaking")), s.at("freq_hz").get<double>(),
                         s.at("q").get<double>(), s.at("gain_db").get<double>()});
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("bad perturbation parameters: ") + e.what());
  }
  return p;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(what + ": " + e.what());
  }
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// ---------------------------------------------------------------------------

struct ConvertArgs {
  std::string model, speaker, store, in, out;
};

int cmd_convert(const ConvertArgs& a) {
  const Model model = Model::load(resolve_model_path(a.model));
  const SpeakerEmbedding e = resolve_speaker(a.speaker, a.store);
  const AudioBuffer x = load_wav(a.in);
  require_engine_rate(x);
  save_wav(model.convert(x, e), a.out);
  return kOk;
}

struct StreamArgs {
  std::string model, speaker, store;
  std::size_t chunk = 1024;
};

// Writes all of `y`; false once the reader has gone away.
bool write_all(const std::vector<float>& y, std::size_t count) {
  if (count == 0) return true;
  if (std::fwrite(y.data(), sizeof(float), count, stdout) != count) return false;
  return std::fflush(stdout) == 0;
}

int cmd_stream(const StreamArgs& a) {
  const Model model = Model::load(resolve_model_path(a.model));
  const SpeakerEmbedding e = resolve_speaker(a.speaker, a.store);
  StreamSession session(model, e, a.chunk);
  std::signal(SIGPIPE, SIG_IGN);

  std::vector<float> buf(a.chunk);
  for (;;) {
    std::size_t got = 0;
    while (got < a.chunk) {
      const std::size_t n = std::fread(buf.data() + got, sizeof(float), a.chunk - got, stdin);
      if (n == 0) break;
      got += n;
    }
    if (got == 0) break;
    std::fill(buf.begin() + static_cast<std::ptrdiff_t>(got), buf.end(), 0.0f);
    const auto y = session.process_chunk(buf);
    if (!write_all(y, got)) break;
    if (got < a.chunk) break;
  }
  session.close();
  return kOk;
}

struct BenchArgs {
  std::string model, mode = "offline";
  double duration = 10.0;
  std::size_t trials = kDefaultBenchTrials, chunk = 0;
  std::uint64_t seed = 0;
  bool json = false;
};

int cmd_bench(const BenchArgs& a) {
  const std::string path = a.model.empty() ? env_or("SRAVE_MODEL", "") : a.model;
  const Model model = path.empty() ? Model::random(ModelConfig{}, a.seed) : Model::load(path);
  if (a.mode != "offline" && a.mode != "streaming") throw InputError("mode must be offline or streaming");
  const BenchMode mode = a.mode == "offline" ? BenchMode::Offline : BenchMode::Streaming;
  const BenchReport r = bench(model, a.duration, a.trials, mode, a.chunk, a.seed);
  if (a.json) {
    std::cout << r.to_json() << "\n";
  } else {
    std::cout << std::setprecision(6) << "mode         " << a.mode << "\n"
              << "trials       " << r.trials << "\n"
              << "samples      " << r.samples << "\n"
              << "chunk        " << r.chunk << "\n"
              << "mean_seconds " << r.mean_seconds << "\n"
              << "rtf          " << r.rtf << "\n"
              << "speed_hz     " << r.speed_hz << "\n";
  }
  return kOk;
}

struct LossArgs {
  std::string reference, converted, targets, logits, disc;
  double lambda = 0.1;
};

struct InspectArgs {
  std::string model;
  bool json = false, losses = false;
  std::uint64_t seed = 0;
  LossArgs loss;
};

DsuTargets load_targets(const std::string& path) {
  const WeightContainer c = load_container(path);
  const Tensor& u = c.get("units");
  DsuTargets y;
  for (float v : u.data) {
    if (v != std::floor(v)) throw InputError(path + ": unit ids must be integers");
    y.class_ids.push_back(static_cast<int>(v));
  }
  if (const Tensor* r = c.find("frame_rate"); r != nullptr && r->numel() == 1) y.frame_rate = r->data[0];
  if (const Tensor* k = c.find("num_classes"); k != nullptr && k->numel() == 1) {
    y.num_classes = static_cast<std::size_t>(k->data[0]);
  }
  return y;
}

json loss_report(const InspectArgs& a) {
  const auto& l = a.loss;
  if (l.reference.empty() || l.converted.empty() || l.targets.empty()) {
    throw InputError("--losses needs --reference, --converted and --targets");
  }
  const AudioBuffer x = load_wav(l.reference);
  const AudioBuffer xh = load_wav(l.converted);
  require_engine_rate(x);
  require_engine_rate(xh);
  const DsuTargets y = load_targets(l.targets);

  ProjectedLogits zp;
  if (!l.logits.empty()) {
    const WeightContainer c = load_container(l.logits);
    zp.logits = c.get("logits");
    const Tensor* r = c.find("frame_rate");
    zp.frame_rate = r != nullptr && r->numel() == 1 ? r->data[0] : ModelConfig{}.latent_rate();
  } else {
    const Model model = Model::load(resolve_model_path(a.model));
    zp = model.project(model.encode(analyze(model.bank(), x)));
  }

  const DiscriminatorSet disc = l.disc.empty() ? DiscriminatorSet::random(a.seed)
                                               : DiscriminatorSet::from_container(load_container(l.disc));
  const LossWeights w{l.lambda};
  const auto res = default_resolutions();
  const double mstft = loss_mstft(x.samples, xh.samples, res);
  const double content = loss_content(y, zp);
  const auto real = disc.scores(x.samples);
  const auto fake = disc.scores(xh.samples);
  const double adv = adv_generator_loss(fake, w);
  return {{"mstft", mstft},
          {"content", content},
          {"adv_generator", adv},
          {"discriminator", discriminator_loss(real, fake, w)},
          {"total_generator", total_generator_loss(adv, mstft, content)},
          {"lambda", l.lambda}};
}

int cmd_inspect(const InspectArgs& a) {
  if (a.losses) {
    const json r = loss_report(a);
    if (a.json) {
      print_json(r);
    } else {
      for (const char* k : {"mstft", "content", "adv_generator", "discriminator", "total_generator"}) {
        std::cout << std::left << std::setw(16) << k << std::setprecision(8) << r.at(k).get<double>() << "\n";
      }
    }
    return kOk;
  }

  const Model model = Model::load(resolve_model_path(a.model));
  const auto& cfg = model.config();
  const auto layers = model.layers();
  if (a.json) {
    json jl = json::array();
    for (const auto& l : layers) {
      jl.push_back({{"name", l.name}, {"kind", l.kind}, {"weight_shape", l.weight_shape}, {"params", l.params}});
    }
    print_json({{"config", cfg.to_text()},
                {"hop", cfg.hop()},
                {"latent_rate_hz", cfg.latent_rate()},
                {"latency_samples", model.bank().group_delay()},
                {"param_count", model.param_count()},
                {"projection_param_count", model.projection_param_count()},
                {"layers", jl}});
    return kOk;
  }
  std::cout << cfg.to_text() << "\n";
  for (const auto& l : layers) {
    std::cout << std::left << std::setw(28) << l.name << std::setw(18) << l.kind << std::setw(20)
              << shape_string(l.weight_shape) << l.params << "\n";
  }
  std::cout << "\nhop              " << cfg.hop() << "\n"
            << "latent_rate_hz   " << cfg.latent_rate() << "\n"
            << "latency_samples  " << model.bank().group_delay() << "\n"
            << "param_count      " << model.param_count() << "\n"
            << "projection       " << model.projection_param_count() << "\n";
  return kOk;
}

struct InitArgs {
  std::string out, config;
  std::uint64_t seed = 0;
};

int cmd_init(const InitArgs& a) {
  ModelConfig cfg;
  if (!a.config.empty()) {
    try {
      cfg = ModelConfig::from_text(read_text(a.config));
    } catch (const InputError& e) {
      throw ModelError(std::string("bad config: ") + e.what());
    }
  }
  save_container(Model::random(cfg, a.seed).to_container(), a.out);
  return kOk;
}

struct PqmfArgs {
  int bands = 16, taps = 512;
  double attenuation = 100.0, duration = 1.0, min_snr = 60.0;
  std::uint64_t seed = 0;
  bool json = false;
};

int cmd_pqmf_check(const PqmfArgs& a) {
  if (!(a.duration > 0.0)) throw InputError("duration must be positive");
  const PqmfBank bank = design_bank(a.bands, a.attenuation, a.taps);
  const auto len = static_cast<std::size_t>(a.duration * kEngineSampleRate);
  const double snr = round_trip_snr_db(bank, gen_noise(len, a.seed, 0.3), static_cast<std::size_t>(a.taps));
  if (a.json) {
    print_json({{"snr_db", snr}, {"bands", a.bands}, {"taps", a.taps}, {"delay_samples", bank.group_delay()}});
  } else {
    std::cout << std::fixed << std::setprecision(2) << "round-trip SNR " << snr << " dB\n";
  }
  if (!(snr >= a.min_snr)) {
    std::cerr << "srave: round-trip SNR below " << a.min_snr << " dB\n";
    return kInvariant;
  }
  return kOk;
}

struct PerturbArgs {
  std::string in, out, params;
  std::uint64_t seed = 0;
  std::optional<double> pitch, formant;
  bool no_peq = false, json = false;
};

int cmd_perturb(const PerturbArgs& a) {
  Prng rng(a.seed);
  PerturbParams p = sample_params(rng);
  if (!a.params.empty()) p = params_from_json(parse_json(read_text(a.params), a.params), p);
  if (a.pitch) p.pitch_ratio = *a.pitch;
  if (a.formant) p.formant_ratio = *a.formant;
  if (a.no_peq) p.peq.clear();
  const AudioBuffer x = load_wav(a.in);
  save_wav(perturb(x, p), a.out);
  if (a.json) print_json(params_json(p));
  return kOk;
}

struct EmbedArgs {
  std::string store, speaker, utterance, file, a, b, out;
  std::size_t dim = kDefaultSpeakerDim;
  std::uint64_t seed = 0;
  bool json = false;
};

int cmd_embed_put(const EmbedArgs& a) {
  SpeakerStore(a.store).put(a.speaker, a.utterance, load_embedding(a.file));
  return kOk;
}

int cmd_embed_get(const EmbedArgs& a) {
  const SpeakerEmbedding e = resolve_speaker(a.speaker, a.store);
  if (!a.out.empty()) save_embedding(e, a.out);
  if (a.json) {
    print_json({{"speaker", a.speaker}, {"dim", e.dim()}, {"values", e.values}});
  } else if (a.out.empty()) {
    std::cout << std::setprecision(9);
    for (float v : e.values) std::cout << v << "\n";
  }
  return kOk;
}

int cmd_embed_sim(const EmbedArgs& a) {
  const double c = cosine_similarity(resolve_speaker(a.a, a.store), resolve_speaker(a.b, a.store));
  if (a.json) {
    print_json({{"cosine", c}});
  } else {
    std::cout << std::fixed << std::setprecision(6) << c << "\n";
  }
  return kOk;
}

int cmd_embed_random(const EmbedArgs& a) {
  save_embedding(synthetic_embedding(a.dim, a.seed), a.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"srave: streaming voice conversion engine"};
  app.require_subcommand(1);
  const std::string default_store = env_or("SRAVE_STORE", "speakers");
  std::function<int()> run;

  ConvertArgs conv{.store = default_store};
  auto* c = app.add_subcommand("convert", "Convert a 48 kHz WAV file to the target speaker");
  c->add_option("input", conv.in, "Input WAV")->required()->check(CLI::ExistingFile);
  c->add_option("output", conv.out, "Output WAV")->required();
  c->add_option("-m,--model", conv.model, "Model container (default: $SRAVE_MODEL)");
  c->add_option("-s,--speaker", conv.speaker, "Speaker id in the store, or an embedding file")->required();
  c->add_option("--store", conv.store, "Speaker store directory (default: $SRAVE_STORE or ./speakers)");
  c->callback([&] { run = [&] { return cmd_convert(conv); }; });

  StreamArgs st{.store = default_store};
  auto* s = app.add_subcommand("stream", "Convert raw float32 mono 48 kHz from stdin to stdout");
  s->add_option("-m,--model", st.model, "Model container (default: $SRAVE_MODEL)");
  s->add_option("-s,--speaker", st.speaker, "Speaker id or embedding file")->required();
  s->add_option("--store", st.store, "Speaker store directory");
  s->add_option("-c,--chunk", st.chunk, "Samples per chunk")->capture_default_str();
  s->callback([&] { run = [&] { return cmd_stream(st); }; });

  BenchArgs bn;
  auto* b = app.add_subcommand("bench", "Time decoding and synthesis");
  b->add_option("-m,--model", bn.model, "Model container (default: $SRAVE_MODEL, else a random model)");
  b->add_option("-d,--duration", bn.duration, "Seconds of audio per trial")->capture_default_str();
  b->add_option("-t,--trials", bn.trials, "Timed trials")->capture_default_str();
  b->add_option("--mode", bn.mode, "offline or streaming")->capture_default_str();
  b->add_option("-c,--chunk", bn.chunk, "Samples per decode call (0: whole signal)");
  b->add_option("--seed", bn.seed, "Seed for latents, embedding and the fallback model");
  b->add_flag("--json", bn.json, "Print the report as JSON");
  b->callback([&] { run = [&] { return cmd_bench(bn); }; });

  InspectArgs in;
  auto* i = app.add_subcommand("inspect", "Print model configuration, layers and parameter count");
  i->add_option("-m,--model", in.model, "Model container (default: $SRAVE_MODEL)");
  i->add_flag("--json", in.json, "Print JSON");
  i->add_flag("--losses", in.losses, "Evaluate training losses instead");
  i->add_option("--reference", in.loss.reference, "Reference WAV");
  i->add_option("--converted", in.loss.converted, "Converted WAV");
  i->add_option("--targets", in.loss.targets, "Unit-id container");
  i->add_option("--logits", in.loss.logits, "Logit container (default: computed by the model)");
  i->add_option("--disc", in.loss.disc, "Discriminator container (default: random, from --seed)");
  i->add_option("--lambda", in.loss.lambda, "Weight of the multi-scale discriminator")->capture_default_str();
  i->add_option("--seed", in.seed, "Seed for the random discriminator");
  i->callback([&] { run = [&] { return cmd_inspect(in); }; });

  InitArgs ini;
  auto* n = app.add_subcommand("init", "Write a container with random weights");
  n->add_option("output", ini.out, "Output container")->required();
  n->add_option("--seed", ini.seed, "Initialization seed")->capture_default_str();
  n->add_option("--config", ini.config, "Config file in key=value form");
  n->callback([&] { run = [&] { return cmd_init(ini); }; });

  PqmfArgs pq;
  auto* p = app.add_subcommand("pqmf-check", "Measure filterbank round-trip SNR on noise");
  p->add_option("--bands", pq.bands)->capture_default_str();
  p->add_option("--taps", pq.taps)->capture_default_str();
  p->add_option("--attenuation", pq.attenuation, "Stopband attenuation in dB")->capture_default_str();
  p->add_option("--duration", pq.duration, "Seconds of test noise")->capture_default_str();
  p->add_option("--min-snr", pq.min_snr, "Exit 4 below this SNR")->capture_default_str();
  p->add_option("--seed", pq.seed);
  p->add_flag("--json", pq.json, "Print JSON");
  p->callback([&] { run = [&] { return cmd_pqmf_check(pq); }; });

  PerturbArgs pt;
  auto* q = app.add_subcommand("perturb", "Apply the random EQ, pitch and formant chain");
  q->add_option("input", pt.in, "Input WAV")->required()->check(CLI::ExistingFile);
  q->add_option("output", pt.out, "Output WAV")->required();
  q->add_option("--seed", pt.seed, "Parameter seed")->capture_default_str();
  q->add_option("--params", pt.params, "JSON file overriding sampled parameters");
  q->add_option("--pitch", pt.pitch, "Pitch ratio override");
  q->add_option("--formant", pt.formant, "Formant ratio override");
  q->add_flag("--no-peq", pt.no_peq, "Skip the equalizer");
  q->add_flag("--json", pt.json, "Print the applied parameters as JSON");
  q->callback([&] { run = [&] { return cmd_perturb(pt); }; });

  EmbedArgs em{.store = default_store};
  auto* e = app.add_subcommand("embed", "Manage speaker embeddings");
  e->require_subcommand(1);
  e->add_option("--store", em.store, "Speaker store directory");
  auto* ep = e->add_subcommand("put", "Store one utterance embedding");
  ep->add_option("speaker", em.speaker)->required();
  ep->add_option("utterance", em.utterance)->required();
  ep->add_option("file", em.file, "Embedding file")->required()->check(CLI::ExistingFile);
  ep->callback([&] { run = [&] { return cmd_embed_put(em); }; });
  auto* eg = e->add_subcommand("get", "Averaged embedding of a speaker");
  eg->add_option("speaker", em.speaker)->required();
  eg->add_option("output", em.out, "Write the embedding here");
  eg->add_flag("--json", em.json, "Print JSON");
  eg->callback([&] { run = [&] { return cmd_embed_get(em); }; });
  auto* es = e->add_subcommand("sim", "Cosine similarity of two embeddings or speakers");
  es->add_option("a", em.a)->required();
  es->add_option("b", em.b)->required();
  es->add_flag("--json", em.json, "Print JSON");
  es->callback([&] { run = [&] { return cmd_embed_sim(em); }; });
  auto* er = e->add_subcommand("random", "Write a deterministic unit-norm embedding");
  er->add_option("output", em.out)->required();
  er->add_option("--dim", em.dim)->capture_default_str();
  er->add_option("--seed", em.seed);
  er->callback([&] { run = [&] { return cmd_embed_random(em); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kInput;
  }

  try {
    return run();
  } catch (const InputError& ex) {
    std::cerr << "srave: " << ex.what() << "\n";
    return kInput;
  } catch (const ModelError& ex) {
    std::cerr << "srave: " << ex.what() << "\n";
    return kModel;
  } catch (const std::exception& ex) {
    std::cerr << "srave: internal error: " << ex.what() << "\n";
    return kInvariant;
  }
}
