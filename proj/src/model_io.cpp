#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hivae/errors.hpp"
#include "hivae/training.hpp"

namespace hivae {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "hivae-model";

std::string domain_name(StatDomain d) {
  switch (d) {
    case StatDomain::Raw: return "raw";
    case StatDomain::Log: return "log";
    case StatDomain::Log1p: return "log1p";
  }
  return "raw";
}

StatDomain parse_domain(const std::string& s) {
  if (s == "raw") return StatDomain::Raw;
  if (s == "log") return StatDomain::Log;
  if (s == "log1p") return StatDomain::Log1p;
  throw ModelFormatError("unknown statistics domain '" + s + "'");
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

json config_to_json(const TrainConfig& c) {
  return {{"dim_z", c.dim_z},
          {"dim_s", c.dim_s},
          {"dim_y", c.dim_y},
          {"layers", c.layers},
          {"hidden", c.hidden},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"tau_start", c.tau_start},
          {"tau_end", c.tau_end},
          {"seed", c.seed},
          {"encoder", encoder_mode_name(c.encoder)},
          {"normalization", c.normalization},
          {"exact_kl_z", c.exact_kl_z},
          {"optimizer",
           {{"name", "adam"},
            {"lr", c.adam.lr},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"eps", c.adam.eps}}}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.dim_z = j.at("dim_z").get<std::size_t>();
  c.dim_s = j.at("dim_s").get<std::size_t>();
  c.dim_y = j.at("dim_y").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.tau_start = j.at("tau_start").get<double>();
  c.tau_end = j.at("tau_end").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto enc = j.at("encoder").get<std::string>();
  if (enc == "factorized") c.encoder = EncoderMode::Factorized;
  else if (enc == "input_dropout") c.encoder = EncoderMode::InputDropout;
  else throw ModelFormatError("unknown encoder mode '" + enc + "'");
  c.normalization = j.at("normalization").get<bool>();
  c.exact_kl_z = j.at("exact_kl_z").get<bool>();
  const auto& opt = j.at("optimizer");
  if (opt.at("name").get<std::string>() != "adam") throw ModelFormatError("unknown optimizer");
  c.adam.lr = opt.at("lr").get<double>();
  c.adam.beta1 = opt.at("beta1").get<double>();
  c.adam.beta2 = opt.at("beta2").get<double>();
  c.adam.eps = opt.at("eps").get<double>();
  return c;
}

}  // namespace

std::string serialize_model(const Model& model) {
  json schema = json::array();
  for (const auto& c : model.schema.columns())
    schema.push_back({{"name", c.name}, {"kind", kind_name(c.kind)}, {"cardinality", c.cardinality}});

  json stats = json::array();
  for (const auto& s : model.stats.columns) {
    if (s) stats.push_back({{"shift", s->shift}, {"scale", s->scale}, {"domain", domain_name(s->domain)}});
    else stats.push_back(nullptr);
  }

  json params = json::array();
  for (const auto& [name, t] : model.named_tensors()) {
    params.push_back({{"name", name},
                      {"rows", t.rows()},
                      {"cols", t.cols()},
                      {"values", std::vector<double>(t.values().begin(), t.values().end())}});
  }

  json log = json::array();
  for (const auto& r : model.log) log.push_back({r.epoch, r.tau, r.elbo});

  json doc = {{"format", kFormatName},
              {"version", kModelFormatVersion},
              {"fingerprint", fingerprint_hex(model.fingerprint())},
              {"schema", schema},
              {"config", config_to_json(model.config)},
              {"normalization", stats},
              {"parameters", params},
              {"log", log}};
  return doc.dump(1) + "\n";
}

Model parse_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelFormatError(std::string("corrupt model file: ") + e.what());
  }
  try {
    if (!doc.is_object() || doc.value("format", std::string()) != kFormatName)
      throw ModelFormatError("not a model file");
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion)
      throw ModelFormatError("unsupported model format version " + std::to_string(version) +
                             " (expected " + std::to_string(kModelFormatVersion) + ")");

    std::vector<ColumnSpec> columns;
    for (const auto& c : doc.at("schema")) {
      const auto kind_text = c.at("kind").get<std::string>();
      const auto kind = parse_kind(kind_text);
      if (!kind) throw ModelFormatError("unknown column kind '" + kind_text + "'");
      columns.push_back({c.at("name").get<std::string>(), *kind, c.at("cardinality").get<std::size_t>()});
    }
    Schema schema(std::move(columns));
    if (doc.at("fingerprint").get<std::string>() != fingerprint_hex(schema.fingerprint()))
      throw ModelFormatError("stored fingerprint does not match the stored schema");

    Model model = init_model(schema, config_from_json(doc.at("config")));

    const auto& stats = doc.at("normalization");
    if (stats.size() != schema.size()) throw ModelFormatError("normalization statistics do not match the schema");
    model.stats.columns.assign(schema.size(), std::nullopt);
    for (std::size_t d = 0; d < schema.size(); ++d) {
      const auto& s = stats[d];
      if (s.is_null()) {
        if (is_numeric(schema[d].kind)) throw ModelFormatError("missing statistics for a numeric column");
        continue;
      }
      model.stats.columns[d] = ColumnStats{s.at("shift").get<double>(), s.at("scale").get<double>(),
                                           parse_domain(s.at("domain").get<std::string>())};
    }

    auto tensors = model.named_tensors();
    const auto& params = doc.at("parameters");
    if (params.size() != tensors.size())
      throw ModelFormatError("expected " + std::to_string(tensors.size()) + " parameter arrays, found " +
                             std::to_string(params.size()));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      auto& [name, t] = tensors[i];
      const auto& p = params[i];
      if (p.at("name").get<std::string>() != name)
        throw ModelFormatError("parameter " + std::to_string(i) + " should be '" + name + "'");
      if (p.at("rows").get<std::size_t>() != t.rows() || p.at("cols").get<std::size_t>() != t.cols())
        throw ModelFormatError("parameter '" + name + "' has the wrong shape");
      const auto values = p.at("values").get<std::vector<double>>();
      if (values.size() != t.size()) throw ModelFormatError("parameter '" + name + "' has the wrong length");
      std::copy(values.begin(), values.end(), t.mutable_values().begin());
    }

    for (const auto& r : doc.at("log"))
      model.log.push_back({r.at(0).get<std::size_t>(), r.at(1).get<double>(), r.at(2).get<double>()});
    return model;
  } catch (const json::exception& e) {
    throw ModelFormatError(std::string("corrupt model file: ") + e.what());
  } catch (const ConfigError& e) {
    throw ModelFormatError(std::string("invalid model configuration: ") + e.what());
  } catch (const DataError& e) {
    throw ModelFormatError(std::string("invalid stored schema: ") + e.what());
  }
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file " + path.string());
  out << serialize_model(model);
  if (!out) throw Error("failed writing model file " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError("cannot read model file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

Model load_model(const std::filesystem::path& path, const Schema& expected) {
  Model model = load_model(path);
  check_fingerprint(model, expected);
  return model;
}

}  // namespace hivae
