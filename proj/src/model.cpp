#include "srave/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "srave/error.hpp"

namespace srave {

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<std::size_t> split_sizes(const std::string& s, const std::string& key) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) {
      throw ModelError("config: bad list value for " + key + ": '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<T>(v);
  } catch (const std::exception&) {
    throw ModelError("config: bad value for " + key + ": '" + s + "'");
  }
}

std::string bn_name(const std::string& prefix, const char* field) { return prefix + "." + field; }

void add_conv(std::vector<ParamSpec>& specs, const std::string& name, std::size_t out,
              std::size_t in, std::size_t kernel, std::size_t fan_in) {
  specs.push_back({name + ".weight", {out, in, kernel}, Init::Kaiming, fan_in});
  specs.push_back({name + ".bias", {out}, Init::Zeros, 1});
}

void add_bn(std::vector<ParamSpec>& specs, const std::string& name, std::size_t c) {
  specs.push_back({bn_name(name, "mean"), {c}, Init::Zeros, 1});
  specs.push_back({bn_name(name, "var"), {c}, Init::Ones, 1});
  specs.push_back({bn_name(name, "gain"), {c}, Init::Ones, 1});
  specs.push_back({bn_name(name, "bias"), {c}, Init::Zeros, 1});
}

std::string stage(const char* part, std::size_t i) { return std::string(part) + ".s" + std::to_string(i); }
std::string unit(std::size_t i, std::size_t j) { return stage("dec", i) + ".r" + std::to_string(j); }

std::size_t pow3(std::size_t j) {
  std::size_t d = 1;
  while (j--) d *= 3;
  return d;
}

}  // namespace

// ------------------------------------------------------------ ModelConfig

std::size_t ModelConfig::stride_product() const {
  return std::accumulate(encoder_strides.begin(), encoder_strides.end(), std::size_t{1},
                         std::multiplies<>());
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ModelError("config: " + m); };
  if (num_bands < 1 || (num_bands & (num_bands - 1)) != 0) fail("num_bands must be a power of two");
  if (content_bands < 1 || content_bands > num_bands) fail("content_bands must lie in [1, num_bands]");
  if (latent_dim < 1 || num_classes < 1 || speaker_dim < 1) fail("dimensions must be positive");
  if (encoder_channels.size() != encoder_strides.size() + 1) fail("encoder_channels needs one entry per stride plus one");
  if (decoder_channels.size() != decoder_strides.size() + 1) fail("decoder_channels needs one entry per stride plus one");
  auto positive = [](const std::vector<std::size_t>& v) {
    return std::all_of(v.begin(), v.end(), [](std::size_t x) { return x >= 1; });
  };
  if (!positive(encoder_channels) || !positive(decoder_channels) || !positive(encoder_strides) ||
      !positive(decoder_strides)) {
    fail("channels and strides must be >= 1");
  }
  const auto dec = std::accumulate(decoder_strides.begin(), decoder_strides.end(), std::size_t{1},
                                   std::multiplies<>());
  if (dec != stride_product()) fail("decoder stride product must equal encoder stride product");
  if (io_kernel < 1 || inner_kernel < 1) fail("kernels must be >= 1");
  if (!(bn_eps >= 0.0f)) fail("bn_eps must be non-negative");
  if (num_bands > 1 && (pqmf_taps <= num_bands || pqmf_taps % num_bands != 0)) {
    fail("pqmf_taps must be a multiple of num_bands greater than it");
  }
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os.precision(9);
  os << "num_bands=" << num_bands << "\n"
     << "content_bands=" << content_bands << "\n"
     << "latent_dim=" << latent_dim << "\n"
     << "num_classes=" << num_classes << "\n"
     << "speaker_dim=" << speaker_dim << "\n"
     << "encoder_channels=" << join(encoder_channels) << "\n"
     << "encoder_strides=" << join(encoder_strides) << "\n"
     << "decoder_channels=" << join(decoder_channels) << "\n"
     << "decoder_strides=" << join(decoder_strides) << "\n"
     << "residual_units=" << residual_units << "\n"
     << "io_kernel=" << io_kernel << "\n"
     << "inner_kernel=" << inner_kernel << "\n"
     << "leaky_slope=" << leaky_slope << "\n"
     << "bn_eps=" << bn_eps << "\n"
     << "pqmf_taps=" << pqmf_taps << "\n"
     << "pqmf_attenuation_db=" << pqmf_attenuation_db << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ModelError("config: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "num_bands") c.num_bands = parse_number<int>(value, key);
    else if (key == "content_bands") c.content_bands = parse_number<int>(value, key);
    else if (key == "latent_dim") c.latent_dim = parse_number<std::size_t>(value, key);
    else if (key == "num_classes") c.num_classes = parse_number<std::size_t>(value, key);
    else if (key == "speaker_dim") c.speaker_dim = parse_number<std::size_t>(value, key);
    else if (key == "encoder_channels") c.encoder_channels = split_sizes(value, key);
    else if (key == "encoder_strides") c.encoder_strides = split_sizes(value, key);
    else if (key == "decoder_channels") c.decoder_channels = split_sizes(value, key);
    else if (key == "decoder_strides") c.decoder_strides = split_sizes(value, key);
    else if (key == "residual_units") c.residual_units = parse_number<std::size_t>(value, key);
    else if (key == "io_kernel") c.io_kernel = parse_number<std::size_t>(value, key);
    else if (key == "inner_kernel") c.inner_kernel = parse_number<std::size_t>(value, key);
    else if (key == "leaky_slope") c.leaky_slope = parse_number<float>(value, key);
    else if (key == "bn_eps") c.bn_eps = parse_number<float>(value, key);
    else if (key == "pqmf_taps") c.pqmf_taps = parse_number<int>(value, key);
    else if (key == "pqmf_attenuation_db") c.pqmf_attenuation_db = parse_number<double>(value, key);
    else throw ModelError("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

// ------------------------------------------------------------ parameters

std::vector<ParamSpec> model_param_specs(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> s;
  const auto bands = static_cast<std::size_t>(cfg.content_bands);
  const auto& ec = cfg.encoder_channels;
  const std::size_t ik = cfg.inner_kernel, io = cfg.io_kernel;

  add_conv(s, "enc.in", ec[0], bands, io, bands * io);
  for (std::size_t i = 0; i < cfg.encoder_strides.size(); ++i) {
    const std::size_t st = cfg.encoder_strides[i];
    add_bn(s, stage("enc", i) + ".bn0", ec[i]);
    add_conv(s, stage("enc", i) + ".conv", ec[i], ec[i], ik, ec[i] * ik);
    add_bn(s, stage("enc", i) + ".bn1", ec[i]);
    add_conv(s, stage("enc", i) + ".down", ec[i + 1], ec[i], 2 * st, ec[i] * 2 * st);
  }
  add_bn(s, "enc.out.bn", ec.back());
  add_conv(s, "enc.out", cfg.latent_dim, ec.back(), ik, ec.back() * ik);

  add_conv(s, "proj", cfg.num_classes, cfg.latent_dim, 1, cfg.latent_dim);

  const auto& dc = cfg.decoder_channels;
  add_conv(s, "dec.in", dc[0], cfg.latent_dim, ik, cfg.latent_dim * ik);
  for (std::size_t i = 0; i < cfg.decoder_strides.size(); ++i) {
    const std::size_t st = cfg.decoder_strides[i];
    // Each upsampled output sample sums in * kernel / stride products.
    add_conv(s, stage("dec", i) + ".up", dc[i + 1], dc[i], 2 * st, dc[i] * 2);
    for (std::size_t j = 0; j < cfg.residual_units; ++j) {
      const std::size_t c = dc[i + 1];
      add_conv(s, unit(i, j) + ".dilated", c, c, ik, c * ik);
      add_conv(s, unit(i, j) + ".pointwise", c, c, 1, c);
      // Residual branches start damped so the stack's gain stays O(1).
      s[s.size() - 2].gain = 1.0 / std::sqrt(static_cast<double>(cfg.residual_units));
      s.push_back({unit(i, j) + ".film.weight", {2 * c, cfg.speaker_dim}, Init::Kaiming, cfg.speaker_dim});
      s.push_back({unit(i, j) + ".film.bias", {2 * c}, Init::FilmIdentity, 1});
    }
  }
  const auto nb = static_cast<std::size_t>(cfg.num_bands);
  add_conv(s, "dec.wave", nb, dc.back(), io, dc.back() * io);
  add_conv(s, "dec.amp", nb, dc.back(), io, dc.back() * io);
  return s;
}

// ------------------------------------------------------------------ Model

Model::Model(const ModelConfig& cfg, const WeightContainer& weights)
    : cfg_(cfg), bank_(design_bank(cfg.num_bands, cfg.pqmf_attenuation_db, cfg.pqmf_taps)) {
  cfg_.validate();
  for (const auto& spec : model_param_specs(cfg_)) {
    const Tensor* t = weights.find(spec.name);
    if (t == nullptr) throw ModelError("weights: missing " + spec.name);
    if (t->shape != spec.shape) {
      throw ModelError("weights: " + spec.name + " has shape " + shape_string(t->shape) +
                       ", config expects " + shape_string(spec.shape));
    }
    weights_.put(spec.name, *t);
  }

  const auto& w = weights_;
  auto conv = [&](const std::string& name, ConvSpec spec) {
    return Conv1d(spec, w.get(name + ".weight"), w.get(name + ".bias"));
  };
  auto bn = [&](const std::string& name) {
    return BatchNorm{w.get(bn_name(name, "mean")).data, w.get(bn_name(name, "var")).data,
                     w.get(bn_name(name, "gain")).data, w.get(bn_name(name, "bias")).data, cfg_.bn_eps};
  };

  const auto& ec = cfg_.encoder_channels;
  const std::size_t ik = cfg_.inner_kernel, io = cfg_.io_kernel;
  enc_in_ = conv("enc.in", {static_cast<std::size_t>(cfg_.content_bands), ec[0], io});
  for (std::size_t i = 0; i < cfg_.encoder_strides.size(); ++i) {
    const std::size_t st = cfg_.encoder_strides[i];
    enc_stages_.push_back({bn(stage("enc", i) + ".bn0"), conv(stage("enc", i) + ".conv", {ec[i], ec[i], ik}),
                           bn(stage("enc", i) + ".bn1"),
                           conv(stage("enc", i) + ".down", {ec[i], ec[i + 1], 2 * st, st})});
  }
  enc_out_bn_ = bn("enc.out.bn");
  enc_out_ = conv("enc.out", {ec.back(), cfg_.latent_dim, ik});
  proj_ = conv("proj", {cfg_.latent_dim, cfg_.num_classes, 1});

  const auto& dc = cfg_.decoder_channels;
  dec_in_ = conv("dec.in", {cfg_.latent_dim, dc[0], ik});
  for (std::size_t i = 0; i < cfg_.decoder_strides.size(); ++i) {
    const std::size_t st = cfg_.decoder_strides[i];
    DecoderStage ds{ConvTranspose1d({dc[i], dc[i + 1], 2 * st, st}, w.get(stage("dec", i) + ".up.weight"),
                                    w.get(stage("dec", i) + ".up.bias")),
                    {}};
    for (std::size_t j = 0; j < cfg_.residual_units; ++j) {
      const std::size_t c = dc[i + 1];
      ds.units.push_back({conv(unit(i, j) + ".dilated", {c, c, ik, 1, pow3(j)}),
                          conv(unit(i, j) + ".pointwise", {c, c, 1}),
                          Linear{w.get(unit(i, j) + ".film.weight"), w.get(unit(i, j) + ".film.bias")}});
    }
    dec_stages_.push_back(std::move(ds));
  }
  const auto nb = static_cast<std::size_t>(cfg_.num_bands);
  wave_ = conv("dec.wave", {dc.back(), nb, io});
  amp_ = conv("dec.amp", {dc.back(), nb, io});
}

Model Model::random(const ModelConfig& cfg, std::uint64_t seed) {
  return Model(cfg, init_random(model_param_specs(cfg), seed));
}

Model Model::from_container(const WeightContainer& c) {
  if (!c.contains("__config__")) throw ModelError("container has no __config__ entry");
  return Model(ModelConfig::from_text(c.get_text("__config__")), c);
}

Model Model::load(const std::filesystem::path& path) { return from_container(load_container(path)); }

WeightContainer Model::to_container() const {
  WeightContainer c;
  c.put_text("__config__", cfg_.to_text());
  for (const auto& [name, t] : weights_.entries()) c.put(name, t);
  return c;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : weights_.entries()) {
    if (name.rfind("proj.", 0) != 0) n += t.numel();
  }
  return n;
}

std::size_t Model::projection_param_count() const { return proj_.param_count(); }

std::vector<LayerSummary> Model::layers() const {
  std::vector<LayerSummary> out;
  for (const auto& [name, t] : weights_.entries()) {
    const auto dot = name.rfind('.');
    const std::string layer = name.substr(0, dot);
    if (out.empty() || out.back().name != layer) {
      std::string kind = "conv1d";
      if (layer.find(".up") != std::string::npos) kind = "transposed_conv1d";
      else if (layer.find(".bn") != std::string::npos) kind = "batchnorm";
      else if (layer.find(".film") != std::string::npos) kind = "film_linear";
      else if (layer == "proj") kind = "projection";
      out.push_back({layer, kind, t.shape, 0});
    }
    out.back().params += t.numel();
  }
  return out;
}

Tensor Model::content_rows(const BandMatrix& bands) const {
  if (bands.num_bands < cfg_.content_bands) {
    throw InputError("encode: need at least " + std::to_string(cfg_.content_bands) + " bands, got " +
                     std::to_string(bands.num_bands));
  }
  const auto rows = static_cast<std::size_t>(cfg_.content_bands);
  Tensor x({rows, bands.frames});
  std::copy(bands.data.begin(), bands.data.begin() + static_cast<std::ptrdiff_t>(rows * bands.frames),
            x.data.begin());
  return x;
}

EncoderState Model::encoder_state() const {
  EncoderState st{enc_in_.initial_state(), {}, {}, enc_out_.initial_state()};
  for (const auto& s : enc_stages_) {
    st.conv.push_back(s.conv.initial_state());
    st.down.push_back(s.down.initial_state());
  }
  return st;
}

DecoderState Model::decoder_state() const {
  DecoderState st;
  st.input = dec_in_.initial_state();
  for (const auto& s : dec_stages_) {
    st.up.push_back(s.up.initial_state());
    st.dilated.emplace_back();
    st.pointwise.emplace_back();
    for (const auto& u : s.units) {
      st.dilated.back().push_back(u.dilated.initial_state());
      st.pointwise.back().push_back(u.pointwise.initial_state());
    }
  }
  st.wave = wave_.initial_state();
  st.amp = amp_.initial_state();
  return st;
}

Tensor Model::encode_step(const Tensor& content, EncoderState& st) const {
  if (content.length() % cfg_.stride_product() != 0) {
    throw InputError("encode: " + std::to_string(content.length()) +
                     " band frames not divisible by stride product " +
                     std::to_string(cfg_.stride_product()));
  }
  const float slope = cfg_.leaky_slope;
  Tensor h = enc_in_.forward(content, st.input);
  for (std::size_t i = 0; i < enc_stages_.size(); ++i) {
    const auto& s = enc_stages_[i];
    batchnorm_inplace(h, s.bn0);
    leaky_relu_inplace(h, slope);
    h = s.conv.forward(h, st.conv[i]);
    batchnorm_inplace(h, s.bn1);
    leaky_relu_inplace(h, slope);
    h = s.down.forward(h, st.down[i]);
  }
  batchnorm_inplace(h, enc_out_bn_);
  leaky_relu_inplace(h, slope);
  return enc_out_.forward(h, st.output);
}

Tensor Model::decode_step(const Tensor& z, const DecoderConditioning& cond, DecoderState& st) const {
  if (z.rank() != 2 || z.channels() != cfg_.latent_dim) {
    throw InputError("decode: latent must be [" + std::to_string(cfg_.latent_dim) + " x T], got " +
                     shape_string(z.shape));
  }
  if (cond.size() != dec_stages_.size()) throw InputError("decode: conditioning has wrong stage count");
  const float slope = cfg_.leaky_slope;
  Tensor h = dec_in_.forward(z, st.input);
  for (std::size_t i = 0; i < dec_stages_.size(); ++i) {
    const auto& s = dec_stages_[i];
    leaky_relu_inplace(h, slope);
    h = s.up.forward(h, st.up[i]);
    for (std::size_t j = 0; j < s.units.size(); ++j) {
      const auto& u = s.units[j];
      Tensor r = leaky_relu(h, slope);
      r = u.dilated.forward(r, st.dilated[i][j]);
      leaky_relu_inplace(r, slope);
      r = u.pointwise.forward(r, st.pointwise[i][j]);
      for (std::size_t k = 0; k < h.numel(); ++k) h.data[k] += r.data[k];
      film_inplace(h, cond[i][j]);
    }
  }
  leaky_relu_inplace(h, slope);
  Tensor wave = wave_.forward(h, st.wave);
  Tensor amp = amp_.forward(h, st.amp);
  sigmoid_inplace(amp);
  for (std::size_t k = 0; k < wave.numel(); ++k) wave.data[k] *= amp.data[k];
  return wave;
}

LatentSequence Model::encode(const BandMatrix& bands) const {
  auto st = encoder_state();
  return LatentSequence{encode_step(content_rows(bands), st),
                        bands.band_rate / static_cast<double>(cfg_.stride_product())};
}

ProjectedLogits Model::project(const LatentSequence& z) const {
  if (z.z.rank() != 2 || z.z.channels() != cfg_.latent_dim) {
    throw InputError("project: latent must have " + std::to_string(cfg_.latent_dim) + " rows");
  }
  return ProjectedLogits{proj_.forward(z.z), z.frame_rate};
}

DecoderConditioning Model::condition(const SpeakerEmbedding& e) const {
  if (e.dim() != cfg_.speaker_dim) {
    throw InputError("speaker embedding has dimension " + std::to_string(e.dim()) + ", model expects " +
                     std::to_string(cfg_.speaker_dim));
  }
  DecoderConditioning cond;
  for (const auto& s : dec_stages_) {
    cond.emplace_back();
    for (const auto& u : s.units) cond.back().push_back(film_from_embedding(e, u.film));
  }
  return cond;
}

BandMatrix Model::decode(const LatentSequence& z, const DecoderConditioning& cond) const {
  auto st = decoder_state();
  Tensor y = decode_step(z.z, cond, st);
  BandMatrix out(cfg_.num_bands, y.length(), z.frame_rate * static_cast<double>(cfg_.stride_product()));
  out.data = std::move(y.data);
  return out;
}

BandMatrix Model::decode(const LatentSequence& z, const SpeakerEmbedding& e) const {
  return decode(z, condition(e));
}

AudioBuffer Model::convert(const AudioBuffer& x, const SpeakerEmbedding& e) const {
  require_engine_rate(x);
  const auto cond = condition(e);
  AudioBuffer out;
  out.sample_rate = x.sample_rate;
  if (x.empty()) return out;

  const std::size_t hop = cfg_.hop();
  const auto delay = static_cast<std::size_t>(bank_.group_delay());
  const std::size_t padded_len = (x.size() + delay + hop - 1) / hop * hop;
  AudioBuffer padded{x.sample_rate, x.samples};
  padded.samples.resize(padded_len, 0.0f);

  const auto bands = analyze(bank_, padded);
  const auto y = synthesize(bank_, decode(encode(bands), cond), x.sample_rate);
  out.samples.assign(y.samples.begin() + static_cast<std::ptrdiff_t>(delay),
                     y.samples.begin() + static_cast<std::ptrdiff_t>(delay + x.size()));
  if (!std::all_of(out.samples.begin(), out.samples.end(), [](float v) { return std::isfinite(v); })) {
    throw InvariantError("convert produced non-finite samples");
  }
  return out;
}

}  // namespace srave
