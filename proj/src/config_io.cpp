#include <fstream>
#include <sstream>

#include <json.hpp>

#include "crg/adapt.hpp"

namespace crg {
namespace {

using ojson = nlohmann::ordered_json;

template <class F>
void for_each_field(F&& f, EngineConfig& c) {
  f("dim", c.dim);
  f("num_classes", c.num_classes);
  f("tau", c.tau);
  f("lambda1", c.lambda1);
  f("lambda2", c.lambda2);
  f("beta", c.beta);
  f("xi1", c.xi1);
  f("xi2", c.xi2);
  f("gamma", c.gamma);
  f("rho", c.rho);
  f("tau_t", c.tau_t);
  f("eta", c.eta);
  f("queue_capacity", c.queue_capacity);
  f("lr", c.lr);
  f("adam_beta1", c.adam_beta1);
  f("adam_beta2", c.adam_beta2);
  f("adam_eps", c.adam_eps);
  f("weight_decay", c.weight_decay);
  f("eps_cov", c.eps_cov);
  f("n_views", c.n_views);
  f("seed", c.seed);
  f("ece_bins", c.ece_bins);
  f("insertion_noise", c.insertion_noise);
  f("use_gda", c.use_gda);
  f("use_negative_cache", c.use_negative_cache);
  f("pseudo_label_rule", c.pseudo_label_rule);
  f("negatives_from_raw_means", c.negatives_from_raw_means);
  f("flip_confidence_threshold", c.flip_confidence_threshold);
  f("persist_residuals", c.persist_residuals);
  f("final_on_marginal", c.final_on_marginal);
  f("negative_sign", c.negative_sign);
}

std::string rule_name(DecisionRule r) { return r == DecisionRule::Gaussian ? "gaussian" : "similarity"; }

DecisionRule parse_rule(const std::string& s) {
  if (s == "gaussian") return DecisionRule::Gaussian;
  if (s == "similarity") return DecisionRule::Similarity;
  throw ConfigMismatch("unknown pseudo_label_rule '" + s + "'");
}

}  // namespace

std::string config_to_json(const EngineConfig& cfg) {
  ojson j;
  EngineConfig copy = cfg;
  for_each_field(
      [&](const char* key, auto& v) {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, DecisionRule>) {
          j[key] = rule_name(v);
        } else {
          j[key] = v;
        }
      },
      copy);
  return j.dump(2);
}

EngineConfig config_from_json(const std::string& text, EngineConfig base) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigMismatch("malformed config: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigMismatch("config must be a JSON object");
  std::size_t matched = 0;
  for_each_field(
      [&](const char* key, auto& v) {
        if (!j.contains(key)) return;
        ++matched;
        try {
          if constexpr (std::is_same_v<std::decay_t<decltype(v)>, DecisionRule>) {
            v = parse_rule(j.at(key).get<std::string>());
          } else {
            v = j.at(key).get<std::decay_t<decltype(v)>>();
          }
        } catch (const nlohmann::json::exception& e) {
          throw ConfigMismatch(std::string("bad value for config field '") + key + "': " + e.what());
        }
      },
      base);
  if (matched != j.size()) {
    EngineConfig probe;
    for (const auto& [key, _] : j.items()) {
      bool known = false;
      for_each_field([&](const char* k, auto&) { known = known || key == k; }, probe);
      if (!known) throw ConfigMismatch("unknown config field '" + key + "'");
    }
  }
  return base;
}

EngineConfig load_config_file(const std::filesystem::path& path, EngineConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), std::move(base));
}

}  // namespace crg
