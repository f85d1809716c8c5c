#include "layersim/config_json.hpp"

#include <algorithm>
#include <cstdio>

#include "layersim/error.hpp"

namespace layersim {

void require_known_keys(const Json& j, std::string_view context, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(context) + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(std::string(context) + ": unknown key '" + key + "'");
    }
  }
}

namespace {

template <typename T>
void read(const Json& j, std::string_view context, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string(context) + "." + key + ": wrong type");
  }
}

void read_size(const Json& j, std::string_view context, const char* key, std::size_t& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string(context) + "." + key + ": expected a nonnegative integer");
  }
  out = v.get<std::size_t>();
}

void read_u64(const Json& j, std::string_view context, const char* key, std::uint64_t& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError(std::string(context) + "." + key + ": expected an unsigned integer");
  }
  out = v.get<std::uint64_t>();
}

}  // namespace

Json to_json(const model::ModelConfig& c) {
  return Json{{"layers", c.layers},       {"dim", c.dim},
              {"seq_len", c.seq_len},     {"input_dim", c.input_dim},
              {"heads", c.heads},         {"mlp_ratio", c.mlp_ratio},
              {"classes", c.classes},     {"arch", std::string(model::arch_name(c.arch))},
              {"use_bias", c.use_bias},   {"init_std", c.init_std}};
}

model::ModelConfig model_config_from_json(const Json& j) {
  constexpr std::string_view ctx = "model";
  require_known_keys(j, ctx,
                     {"layers", "dim", "seq_len", "input_dim", "heads", "mlp_ratio", "classes", "arch", "use_bias",
                      "init_std"});
  model::ModelConfig c;
  read_size(j, ctx, "layers", c.layers);
  read_size(j, ctx, "dim", c.dim);
  read_size(j, ctx, "seq_len", c.seq_len);
  read_size(j, ctx, "input_dim", c.input_dim);
  read_size(j, ctx, "heads", c.heads);
  read_size(j, ctx, "mlp_ratio", c.mlp_ratio);
  read_size(j, ctx, "classes", c.classes);
  std::string arch(model::arch_name(c.arch));
  read(j, ctx, "arch", arch);
  c.arch = model::parse_arch(arch);
  read(j, ctx, "use_bias", c.use_bias);
  read(j, ctx, "init_std", c.init_std);
  c.validate();
  return c;
}

Json to_json(const train::TrainConfig& c) {
  return Json{{"loss_mode", std::string(train::loss_mode_name(c.loss_mode))},
              {"weight_scheme", std::string(train::weight_scheme_name(c.weight_scheme))},
              {"alternating", c.alternating},
              {"beta", c.beta},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"cosine_decay", c.cosine_decay},
              {"seed", c.seed}};
}

train::TrainConfig train_config_from_json(const Json& j) {
  constexpr std::string_view ctx = "train";
  require_known_keys(j, ctx,
                     {"loss_mode", "weight_scheme", "alternating", "beta", "epochs", "batch_size", "lr",
                      "weight_decay", "cosine_decay", "seed"});
  train::TrainConfig c;
  std::string mode(train::loss_mode_name(c.loss_mode));
  read(j, ctx, "loss_mode", mode);
  c.loss_mode = train::parse_loss_mode(mode);
  std::string scheme(train::weight_scheme_name(c.weight_scheme));
  read(j, ctx, "weight_scheme", scheme);
  c.weight_scheme = train::parse_weight_scheme(scheme);
  read(j, ctx, "alternating", c.alternating);
  read(j, ctx, "beta", c.beta);
  read_size(j, ctx, "epochs", c.epochs);
  read_size(j, ctx, "batch_size", c.batch_size);
  read(j, ctx, "lr", c.lr);
  read(j, ctx, "weight_decay", c.weight_decay);
  read(j, ctx, "cosine_decay", c.cosine_decay);
  read_u64(j, ctx, "seed", c.seed);
  c.validate();
  return c;
}

Json to_json(const data::MixtureSpec& s) {
  return Json{{"classes", s.classes},         {"input_dim", s.input_dim},   {"tokens", s.tokens},
              {"between_std", s.between_std}, {"within_std", s.within_std}, {"per_class", s.per_class},
              {"seed", s.seed}};
}

data::MixtureSpec mixture_spec_from_json(const Json& j) {
  constexpr std::string_view ctx = "data.mixture";
  require_known_keys(j, ctx, {"classes", "input_dim", "tokens", "between_std", "within_std", "per_class", "seed"});
  data::MixtureSpec s;
  read_size(j, ctx, "classes", s.classes);
  read_size(j, ctx, "input_dim", s.input_dim);
  read_size(j, ctx, "tokens", s.tokens);
  read(j, ctx, "between_std", s.between_std);
  read(j, ctx, "within_std", s.within_std);
  read_size(j, ctx, "per_class", s.per_class);
  read_u64(j, ctx, "seed", s.seed);
  s.validate();
  return s;
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const Json& j) { return fnv1a_hex(j.dump()); }

}  // namespace layersim
