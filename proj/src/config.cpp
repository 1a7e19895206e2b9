#include "fedsim/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

void require_map(const YAML::Node& node, const std::string& where) {
  if (!node.IsMap()) fail("config: '" + where + "' must be a mapping");
}

// Unknown keys are hard errors so typos cannot silently change a benchmark.
void check_keys(const YAML::Node& node, const std::string& where,
                const std::set<std::string>& allowed) {
  require_map(node, where);
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key))
      fail("config: unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
T get_or(const YAML::Node& node, const std::string& key, const std::string& where,
         T fallback) {
  const YAML::Node v = node[key];
  if (!v.IsDefined() || v.IsNull()) return fallback;
  try {
    return v.as<T>();
  } catch (const YAML::Exception&) {
    fail("config: key '" + where + "." + key + "' has the wrong type");
  }
}

template <typename T>
T require(const YAML::Node& node, const std::string& key,
          const std::string& where) {
  const YAML::Node v = node[key];
  if (!v.IsDefined() || v.IsNull())
    fail("config: missing required key '" + where + "." + key + "'");
  try {
    return v.as<T>();
  } catch (const YAML::Exception&) {
    fail("config: key '" + where + "." + key + "' has the wrong type");
  }
}

CommonConfig parse_common(const YAML::Node& node) {
  check_keys(node, "common",
             {"seed", "rounds", "clients_total", "clients_per_round"});
  CommonConfig c;
  c.seed = get_or<uint64_t>(node, "seed", "common", 0);
  c.rounds = require<int>(node, "rounds", "common");
  c.clients_total = require<int>(node, "clients_total", "common");
  c.clients_per_round = get_or<int>(node, "clients_per_round", "common", 0);
  if (c.rounds < 1) fail("config: common.rounds must be >= 1");
  if (c.clients_total < 1) fail("config: common.clients_total must be >= 1");
  if (c.clients_per_round < 0 || c.clients_per_round > c.clients_total)
    fail("config: common.clients_per_round must be in [1, clients_total]");
  return c;
}

DataConfig parse_data(const YAML::Node& node) {
  check_keys(node, "data",
             {"source", "num_classes", "dim", "samples_per_client",
              "dirichlet_alpha", "test_fraction", "path"});
  DataConfig d;
  d.source = get_or<std::string>(node, "source", "data", "synthetic");
  if (d.source != "synthetic" && d.source != "csv")
    fail("config: data.source must be 'synthetic' or 'csv'");
  d.num_classes = require<int>(node, "num_classes", "data");
  d.dim = require<int64_t>(node, "dim", "data");
  d.samples_per_client =
      get_or<int64_t>(node, "samples_per_client", "data", 32);
  d.dirichlet_alpha = get_or<double>(node, "dirichlet_alpha", "data", 0.5);
  d.test_fraction = get_or<double>(node, "test_fraction", "data", 0.2);
  d.path = get_or<std::string>(node, "path", "data", "");
  if (d.num_classes < 2) fail("config: data.num_classes must be >= 2");
  if (d.dim < 1) fail("config: data.dim must be >= 1");
  if (d.samples_per_client < 1)
    fail("config: data.samples_per_client must be >= 1");
  if (!(d.dirichlet_alpha > 0.0))
    fail("config: data.dirichlet_alpha must be > 0");
  if (!(d.test_fraction > 0.0) || d.test_fraction >= 1.0)
    fail("config: data.test_fraction must be in (0, 1)");
  if (d.source == "csv" && d.path.empty())
    fail("config: data.path is required when data.source=csv");
  return d;
}

ModelSpec parse_model(const YAML::Node& node, const DataConfig& data) {
  check_keys(node, "model", {"kind", "hidden_dims"});
  ModelSpec m;
  const std::string kind = require<std::string>(node, "kind", "model");
  if (kind == "logreg") {
    m.kind = ModelKind::logreg;
  } else if (kind == "mlp") {
    m.kind = ModelKind::mlp;
  } else {
    fail("config: model.kind must be 'logreg' or 'mlp'");
  }
  m.hidden_dims =
      get_or<std::vector<int64_t>>(node, "hidden_dims", "model", {});
  m.input_dim = data.dim;
  m.num_classes = data.num_classes;
  try {
    m.validate();
  } catch (const ConfigError& e) {
    fail(std::string("config: ") + e.what());
  }
  return m;
}

TrainConfig parse_local(const YAML::Node& node) {
  check_keys(node, "local", {"epochs", "batch_size", "learning_rate"});
  TrainConfig t;
  t.local_epochs = require<int>(node, "epochs", "local");
  t.batch_size = require<int64_t>(node, "batch_size", "local");
  t.learning_rate = require<double>(node, "learning_rate", "local");
  if (t.local_epochs < 1) fail("config: local.epochs must be >= 1");
  if (t.batch_size < 1) fail("config: local.batch_size must be >= 1");
  if (!(t.learning_rate > 0.0))
    fail("config: local.learning_rate must be > 0");
  return t;
}

OptimizerSpec parse_optimizer(const YAML::Node& node) {
  check_keys(node, "optimizer",
             {"kind", "server_opt", "server_lr", "momentum", "beta1", "beta2",
              "eps"});
  OptimizerSpec o;
  const std::string kind = get_or<std::string>(node, "kind", "optimizer", "fedavg");
  if (kind == "fedavg") {
    o.kind = OptimizerKind::fedavg;
    for (const char* k : {"server_opt", "server_lr", "momentum", "beta1",
                          "beta2", "eps"}) {
      if (node[k].IsDefined())
        fail(std::string("config: optimizer.") + k +
             " is only valid for kind=fedopt");
    }
    return o;
  }
  if (kind != "fedopt")
    fail("config: optimizer.kind must be 'fedavg' or 'fedopt'");
  o.kind = OptimizerKind::fedopt;
  const std::string server =
      get_or<std::string>(node, "server_opt", "optimizer", "sgd");
  if (server == "sgd") {
    o.server_opt = ServerOpt::sgd;
  } else if (server == "adam") {
    o.server_opt = ServerOpt::adam;
  } else {
    fail("config: optimizer.server_opt must be 'sgd' or 'adam'");
  }
  o.server_lr = get_or<double>(node, "server_lr", "optimizer", 1.0);
  o.momentum = get_or<double>(node, "momentum", "optimizer", 0.0);
  o.beta1 = get_or<double>(node, "beta1", "optimizer", 0.9);
  o.beta2 = get_or<double>(node, "beta2", "optimizer", 0.999);
  o.eps = get_or<double>(node, "eps", "optimizer", 1e-8);
  try {
    o.validate();
  } catch (const ConfigError& e) {
    fail(std::string("config: ") + e.what());
  }
  return o;
}

std::vector<std::pair<int, int>> parse_flip_pairs(const YAML::Node& node,
                                                  const std::string& where) {
  std::vector<std::pair<int, int>> pairs;
  if (!node.IsDefined() || node.IsNull()) return pairs;
  if (!node.IsSequence()) fail("config: " + where + " must be a list of pairs");
  for (const auto& item : node) {
    if (!item.IsSequence() || item.size() != 2)
      fail("config: " + where + " entries must be [source, target] pairs");
    pairs.emplace_back(item[0].as<int>(), item[1].as<int>());
  }
  return pairs;
}

AttackSpec parse_attack(const std::string& type, const YAML::Node& args,
                        const DataConfig& data) {
  AttackSpec a;
  const std::string where = "security.attack_args";
  if (args.IsDefined() && !args.IsNull()) require_map(args, where);
  const YAML::Node node = args.IsDefined() && !args.IsNull()
                              ? args
                              : YAML::Node(YAML::NodeType::Map);

  const std::set<std::string> selection_keys = {"malicious_ratio",
                                                "malicious_ids",
                                                "redraw_per_round"};
  auto parse_selection = [&] {
    a.malicious_ratio = get_or<double>(node, "malicious_ratio", where, 0.0);
    a.malicious_ids =
        get_or<std::vector<int>>(node, "malicious_ids", where, {});
    a.redraw_per_round = get_or<bool>(node, "redraw_per_round", where, false);
    if (a.malicious_ids.empty() && a.malicious_ratio <= 0.0)
      fail("config: " + where +
           " needs malicious_ratio > 0 or an explicit malicious_ids list");
  };

  if (type == "byzantine") {
    std::set<std::string> keys = selection_keys;
    keys.insert("byzantine_mode");
    keys.insert("random_sigma");
    check_keys(node, where, keys);
    a.kind = AttackKind::byzantine;
    const std::string mode = require<std::string>(node, "byzantine_mode", where);
    if (mode == "zero") {
      a.byzantine_mode = ByzantineMode::zero;
    } else if (mode == "random") {
      a.byzantine_mode = ByzantineMode::random;
    } else if (mode == "flip") {
      a.byzantine_mode = ByzantineMode::flip;
    } else {
      fail("config: " + where + ".byzantine_mode must be zero|random|flip");
    }
    a.random_sigma = get_or<double>(node, "random_sigma", where, 1.0);
    parse_selection();
  } else if (type == "label_flip") {
    std::set<std::string> keys = selection_keys;
    keys.insert("flip_pairs");
    check_keys(node, where, keys);
    a.kind = AttackKind::label_flip;
    a.flip_pairs = parse_flip_pairs(node["flip_pairs"], where + ".flip_pairs");
    if (a.flip_pairs.empty())
      fail("config: " + where + ".flip_pairs is required for label_flip");
    parse_selection();
  } else if (type == "model_replacement") {
    std::set<std::string> keys = selection_keys;
    keys.insert("flip_pairs");
    keys.insert("scale_gamma");
    check_keys(node, where, keys);
    a.kind = AttackKind::model_replacement;
    a.flip_pairs = parse_flip_pairs(node["flip_pairs"], where + ".flip_pairs");
    if (a.flip_pairs.empty())
      fail("config: " + where +
           ".flip_pairs is required for model_replacement (backdoor objective)");
    a.scale_gamma = get_or<double>(node, "scale_gamma", where, 0.0);
    parse_selection();
  } else if (type == "dlg") {
    check_keys(node, where, {"dlg_iters", "dlg_lr"});
    a.kind = AttackKind::dlg;
    a.dlg_iters = get_or<int>(node, "dlg_iters", where, 400);
    a.dlg_lr = get_or<double>(node, "dlg_lr", where, 0.1);
  } else {
    fail("config: security.attack_type '" + type +
         "' unknown (byzantine|label_flip|model_replacement|dlg)");
  }

  try {
    a.validate(data.num_classes);
  } catch (const ConfigError& e) {
    fail(std::string("config: ") + e.what());
  }
  return a;
}

DefenseSpec parse_defense(const std::string& type, const YAML::Node& args,
                          int clients_per_round) {
  DefenseSpec d;
  const std::string where = "security.defense_args";
  if (args.IsDefined() && !args.IsNull()) require_map(args, where);
  const YAML::Node node = args.IsDefined() && !args.IsNull()
                              ? args
                              : YAML::Node(YAML::NodeType::Map);

  if (type == "krum") {
    check_keys(node, where, {"byzantine_f"});
    d.kind = DefenseKind::krum;
    d.byzantine_f = get_or<int>(node, "byzantine_f", where, 0);
  } else if (type == "mkrum") {
    check_keys(node, where, {"byzantine_f", "krum_m"});
    d.kind = DefenseKind::mkrum;
    d.byzantine_f = get_or<int>(node, "byzantine_f", where, 0);
    d.krum_m = require<int>(node, "krum_m", where);
  } else if (type == "foolsgold") {
    check_keys(node, where, {"foolsgold_kappa"});
    d.kind = DefenseKind::foolsgold;
    d.foolsgold_kappa = get_or<double>(node, "foolsgold_kappa", where, 1.0);
  } else if (type == "norm_clip") {
    check_keys(node, where, {"clip_tau"});
    d.kind = DefenseKind::norm_clip;
    d.clip_tau = require<double>(node, "clip_tau", where);
  } else if (type == "robust_lr") {
    check_keys(node, where, {"rlr_theta", "rlr_eta"});
    d.kind = DefenseKind::robust_lr;
    d.rlr_theta = get_or<int>(node, "rlr_theta", where, 1);
    d.rlr_eta = get_or<double>(node, "rlr_eta", where, 1.0);
  } else if (type == "slsgd") {
    check_keys(node, where, {"trim_beta", "slsgd_alpha"});
    d.kind = DefenseKind::slsgd;
    d.trim_beta = get_or<double>(node, "trim_beta", where, 0.1);
    d.slsgd_alpha = get_or<double>(node, "slsgd_alpha", where, 1.0);
  } else if (type == "geo_median" || type == "rfa") {
    check_keys(node, where, {"weiszfeld_nu", "weiszfeld_iters"});
    d.kind = type == "rfa" ? DefenseKind::rfa : DefenseKind::geo_median;
    d.weiszfeld_nu = get_or<double>(node, "weiszfeld_nu", where, 1e-6);
    d.weiszfeld_iters = get_or<int>(node, "weiszfeld_iters", where, 100);
  } else if (type == "weak_dp" || type == "crfl") {
    check_keys(node, where, {"clip_tau", "noise_sigma"});
    d.kind = type == "weak_dp" ? DefenseKind::weak_dp : DefenseKind::crfl;
    d.clip_tau = require<double>(node, "clip_tau", where);
    d.noise_sigma = get_or<double>(node, "noise_sigma", where, 0.0);
  } else if (type == "cclip") {
    check_keys(node, where, {"clip_tau"});
    d.kind = DefenseKind::cclip;
    d.clip_tau = require<double>(node, "clip_tau", where);
  } else if (type == "coord_median") {
    check_keys(node, where, {});
    d.kind = DefenseKind::coord_median;
  } else if (type == "trimmed_mean") {
    check_keys(node, where, {"trim_beta"});
    d.kind = DefenseKind::trimmed_mean;
    d.trim_beta = get_or<double>(node, "trim_beta", where, 0.1);
  } else {
    fail("config: security.defense_type '" + type + "' unknown");
  }

  try {
    d.validate(clients_per_round);
  } catch (const ConfigError& e) {
    fail(std::string("config: ") + e.what());
  }
  return d;
}

SecurityConfig parse_security(const YAML::Node& node, const DataConfig& data,
                              int clients_per_round) {
  SecurityConfig s;
  if (!node.IsDefined() || node.IsNull()) return s;
  check_keys(node, "security",
             {"enable_attack", "attack_type", "attack_args", "enable_defense",
              "defense_type", "defense_args"});
  s.enable_attack = get_or<bool>(node, "enable_attack", "security", false);
  s.enable_defense = get_or<bool>(node, "enable_defense", "security", false);
  s.attack_type = get_or<std::string>(node, "attack_type", "security", "");
  s.defense_type = get_or<std::string>(node, "defense_type", "security", "");

  if (s.enable_attack) {
    if (s.attack_type.empty())
      fail("config: security.attack_type is required when enable_attack=true");
    s.attack = parse_attack(s.attack_type, node["attack_args"], data);
  }
  if (s.enable_defense) {
    if (s.defense_type.empty())
      fail("config: security.defense_type is required when enable_defense=true");
    s.defense =
        parse_defense(s.defense_type, node["defense_args"], clients_per_round);
  }
  return s;
}

OutputConfig parse_output(const YAML::Node& node) {
  OutputConfig o;
  if (!node.IsDefined() || node.IsNull()) return o;
  check_keys(node, "output", {"dir", "formats"});
  o.dir = get_or<std::string>(node, "dir", "output", "");
  if (node["formats"].IsDefined()) {
    o.write_csv = false;
    o.write_json = false;
    if (!node["formats"].IsSequence())
      fail("config: output.formats must be a list");
    for (const auto& f : node["formats"]) {
      const std::string name = f.as<std::string>();
      if (name == "csv") {
        o.write_csv = true;
      } else if (name == "json") {
        o.write_json = true;
      } else {
        fail("config: output.formats entries must be 'csv' or 'json'");
      }
    }
  }
  return o;
}

// Sets a dotted-path override on the YAML tree; the value text is parsed as
// YAML so lists and numbers keep their types.
void apply_override(YAML::Node root, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    fail("override '" + assignment + "' must look like section.key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) fail("override '" + assignment + "' has an empty path part");
    parts.push_back(part);
  }

  YAML::Node cursor;
  cursor.reset(root);
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = cursor[parts[i]];
    if (!next.IsDefined() || next.IsNull())
      cursor[parts[i]] = YAML::Node(YAML::NodeType::Map);
    // reset() rebinds the handle; operator= would overwrite the node value.
    cursor.reset(cursor[parts[i]]);
  }
  YAML::Node parsed;
  try {
    parsed = YAML::Load(value);
  } catch (const YAML::Exception&) {
    fail("override '" + assignment + "' has unparsable value text");
  }
  cursor[parts.back()] = parsed;
}

ExperimentConfig parse_config_node(YAML::Node root) {
  check_keys(root, "<top>",
             {"common", "data", "model", "local", "optimizer", "security",
              "output"});
  ExperimentConfig cfg;
  if (!root["common"].IsDefined())
    fail("config: missing required section 'common'");
  if (!root["data"].IsDefined()) fail("config: missing required section 'data'");
  if (!root["model"].IsDefined())
    fail("config: missing required section 'model'");
  if (!root["local"].IsDefined())
    fail("config: missing required section 'local'");

  cfg.common = parse_common(root["common"]);
  cfg.data = parse_data(root["data"]);
  cfg.model = parse_model(root["model"], cfg.data);
  cfg.local = parse_local(root["local"]);
  cfg.optimizer = root["optimizer"].IsDefined()
                      ? parse_optimizer(root["optimizer"])
                      : OptimizerSpec{};
  cfg.security =
      parse_security(root["security"], cfg.data, cfg.clients_per_round());
  cfg.output = parse_output(root["output"]);

  if (cfg.local.batch_size >
      cfg.data.samples_per_client * cfg.common.clients_total)
    fail("config: local.batch_size exceeds the total training sample count");
  return cfg;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& yaml_text,
                                   const std::vector<std::string>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    fail(std::string("config: YAML parse error: ") + e.what());
  }
  if (!root.IsMap()) fail("config: top level must be a mapping");
  for (const auto& o : overrides) apply_override(root, o);
  return parse_config_node(root);
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), overrides);
}

}  // namespace fedsim
