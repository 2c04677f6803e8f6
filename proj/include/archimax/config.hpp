#pragma once
// Model configuration files: JSON with 1-based variable indices.
//
// {
//   "partition": [[1,2,3],[4,5,6]],
//   "clusters": [{"generator": {"family": "joe", "theta": 1.5},
//                 "stdf": {"kind": "logistic", "vartheta": 2.0}}, ...],
//   "radial": {"kind": "gaussian", "rho": 0.5} | {"kind": "gaussian", "corr": [[...]]}
//           | {"kind": "gumbel", "vartheta": 4.0} | {"kind": "independence"},
//   "seed": 1
// }

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "generator.hpp"
#include "sampler.hpp"
#include "stdf.hpp"

namespace archimax {

using Json = nlohmann::ordered_json;

struct ModelConfig {
  ClusteredModelSpec model;
  std::vector<Family> families;
  std::vector<bool> theta_given;
  std::uint64_t seed = 0;
  bool has_seed = false;
};

namespace detail {

inline std::string ptr_join(const std::string& base, const std::string& key) { return base + "/" + key; }
inline std::string ptr_join(const std::string& base, std::size_t i) { return base + "/" + std::to_string(i); }

inline const Json& need(const Json& obj, const std::string& key, const std::string& ptr) {
  if (!obj.is_object()) throw ValidationError("invalid_type", "expected an object", ptr);
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError("missing_field", "missing field '" + key + "'", ptr_join(ptr, key));
  return *it;
}

inline double need_number(const Json& obj, const std::string& key, const std::string& ptr) {
  const Json& v = need(obj, key, ptr);
  if (!v.is_number()) throw ValidationError("invalid_type", "'" + key + "' must be a number", ptr_join(ptr, key));
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ValidationError("parameter_domain", "'" + key + "' must be finite", ptr_join(ptr, key));
  return x;
}

inline std::string need_string(const Json& obj, const std::string& key, const std::string& ptr) {
  const Json& v = need(obj, key, ptr);
  if (!v.is_string()) throw ValidationError("invalid_type", "'" + key + "' must be a string", ptr_join(ptr, key));
  return v.get<std::string>();
}

// Library errors keep their code; the pointer is replaced by the document location.
template <class F>
auto at_pointer(const std::string& ptr, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(e.code(), e.what(), e.pointer().empty() || e.pointer()[0] != '/' ? ptr : e.pointer());
  }
}

inline ClusterPartition parse_partition(const Json& j) {
  const std::string ptr = "/partition";
  if (!j.is_array() || j.empty()) throw ValidationError("incomplete_partition", "partition must be a non-empty array of blocks", ptr);
  ClusterPartition p;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto& b = j[k];
    const std::string bp = ptr_join(ptr, k);
    if (!b.is_array()) throw ValidationError("invalid_type", "each block must be an array of indices", bp);
    std::vector<int> block;
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (!b[i].is_number_integer()) throw ValidationError("invalid_type", "indices must be integers", ptr_join(bp, i));
      const auto v = b[i].get<std::int64_t>();
      if (v < 1) throw ValidationError("index_out_of_range", "indices are 1-based", ptr_join(bp, i));
      block.push_back(static_cast<int>(v - 1));
    }
    p.blocks.push_back(std::move(block));
  }
  p.validate();
  // every index 1..d must appear
  std::vector<int> seen(p.dim(), 0);
  for (const auto& b : p.blocks)
    for (int i : b) seen[i] = 1;
  for (int i = 0; i < p.dim(); ++i)
    if (!seen[i]) throw ValidationError("incomplete_partition", "variable " + std::to_string(i + 1) + " is in no block", ptr);
  return p;
}

inline WSampler parse_w_sampler(const Json& j, int dim, const std::string& ptr) {
  const std::string kind = need_string(j, "kind", ptr);
  if (kind == "logistic") return at_pointer(ptr_join(ptr, "vartheta"), [&] { return logistic_w_sampler(need_number(j, "vartheta", ptr), dim); });
  if (kind == "independence") return independence_w_sampler(dim);
  if (kind == "comonotone") return comonotone_w_sampler(dim);
  throw ValidationError("unknown_kind", "unknown W-sampler kind '" + kind + "'", ptr_join(ptr, "kind"));
}

inline Stdf parse_stdf(const Json& j, int dim, const std::string& ptr) {
  const std::string kind = need_string(j, "kind", ptr);
  if (j.contains("dim")) {
    const Json& d = j["dim"];
    if (!d.is_number_integer() || d.get<std::int64_t>() != dim)
      throw ValidationError("dimension_mismatch", "stdf dimension differs from the block size", ptr_join(ptr, "dim"));
  }
  if (kind == "logistic") return at_pointer(ptr_join(ptr, "vartheta"), [&] { return Stdf::logistic(need_number(j, "vartheta", ptr), dim); });
  if (kind == "independence") return Stdf::independence(dim);
  if (kind == "dnorm_mc") {
    const auto w = parse_w_sampler(need(j, "w", ptr), dim, ptr_join(ptr, "w"));
    const Json& n = need(j, "n_mc", ptr);
    if (!n.is_number_integer() || n.get<std::int64_t>() < 1)
      throw ValidationError("parameter_domain", "n_mc must be a positive integer", ptr_join(ptr, "n_mc"));
    std::uint64_t seed = 0;
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned()) throw ValidationError("invalid_type", "seed must be a non-negative integer", ptr_join(ptr, "seed"));
      seed = j["seed"].get<std::uint64_t>();
    }
    return Stdf::dnorm_mc(w, n.get<std::size_t>(), seed);
  }
  throw ValidationError("unknown_kind", "unknown stdf kind '" + kind + "'", ptr_join(ptr, "kind"));
}

inline RadialCopulaSpec parse_radial(const Json& j, int K) {
  const std::string ptr = "/radial";
  const std::string kind = need_string(j, "kind", ptr);
  RadialCopulaSpec r;
  if (kind == "independence") {
    r = RadialCopulaSpec::independence();
  } else if (kind == "gumbel") {
    r = RadialCopulaSpec::gumbel(need_number(j, "vartheta", ptr));
  } else if (kind == "gaussian") {
    if (j.contains("corr")) {
      const Json& c = j["corr"];
      const std::string cp = ptr_join(ptr, "corr");
      if (!c.is_array() || c.size() != static_cast<std::size_t>(K))
        throw ValidationError("dimension_mismatch", "radial correlation must be K x K", cp);
      Matrix m(K, K);
      for (int a = 0; a < K; ++a) {
        if (!c[a].is_array() || c[a].size() != static_cast<std::size_t>(K))
          throw ValidationError("dimension_mismatch", "radial correlation must be K x K", ptr_join(cp, a));
        for (int b = 0; b < K; ++b) {
          if (!c[a][b].is_number()) throw ValidationError("invalid_type", "correlations must be numbers", ptr_join(ptr_join(cp, a), b));
          m(a, b) = c[a][b].get<double>();
        }
      }
      r = RadialCopulaSpec::gaussian(m);
    } else {
      const double rho = need_number(j, "rho", ptr);
      if (!(rho > -1.0 && rho < 1.0)) throw ValidationError("parameter_domain", "rho must lie in (-1,1)", ptr_join(ptr, "rho"));
      r = RadialCopulaSpec::gaussian_equicorrelated(K, rho);
    }
  } else {
    throw ValidationError("unknown_kind", "unknown radial kind '" + kind + "'", ptr_join(ptr, "kind"));
  }
  r.validate(K);
  return r;
}

}  // namespace detail

// With require_theta = false a missing theta is allowed (fitting input); the
// generator then holds theta = 1 as a placeholder.
inline ModelConfig parse_model_config(const Json& doc, bool require_theta = true) {
  if (!doc.is_object()) throw ValidationError("invalid_type", "config must be a JSON object", "");
  ModelConfig cfg;
  auto& m = cfg.model;
  m.partition = detail::parse_partition(detail::need(doc, "partition", ""));
  const int K = m.partition.size();
  const Json& cl = detail::need(doc, "clusters", "");
  if (!cl.is_array() || cl.size() != static_cast<std::size_t>(K))
    throw ValidationError("dimension_mismatch", "need one cluster entry per partition block", "/clusters");
  for (int k = 0; k < K; ++k) {
    const std::string cp = detail::ptr_join("/clusters", k);
    const Json& c = cl[k];
    const std::string gp = detail::ptr_join(cp, "generator");
    const Json& g = detail::need(c, "generator", cp);
    const std::string fam = detail::need_string(g, "family", gp);
    const Family f = detail::at_pointer(detail::ptr_join(gp, "family"), [&] { return parse_family(fam); });
    cfg.families.push_back(f);
    double theta = 1.0;
    const bool given = require_theta || g.contains("theta");
    if (given) theta = detail::need_number(g, "theta", gp);
    cfg.theta_given.push_back(given);
    m.generators.push_back(detail::at_pointer(detail::ptr_join(gp, "theta"), [&] { return ArchimedeanGenerator(f, theta); }));
    const int dk = m.cluster_dim(k);
    if (c.contains("stdf"))
      m.stdfs.push_back(detail::parse_stdf(c["stdf"], dk, detail::ptr_join(cp, "stdf")));
    else if (require_theta)
      detail::need(c, "stdf", cp);
    else
      m.stdfs.push_back(Stdf::independence(dk));
  }
  if (doc.contains("radial"))
    m.radial = detail::parse_radial(doc["radial"], K);
  else if (require_theta)
    detail::need(doc, "radial", "");
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) throw ValidationError("invalid_type", "seed must be a non-negative integer", "/seed");
    cfg.seed = doc["seed"].get<std::uint64_t>();
    cfg.has_seed = true;
  }
  detail::at_pointer("", [&] {
    m.validate();
    return 0;
  });
  return cfg;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("file_not_found", "cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("invalid_json", std::string("malformed JSON in '") + path + "': " + e.what());
  }
}

inline ModelConfig load_model_config(const std::string& path, bool require_theta = true) {
  return parse_model_config(read_json_file(path), require_theta);
}

inline Json stdf_to_json(const Stdf& s) {
  Json j;
  switch (s.kind()) {
    case Stdf::Kind::Logistic: j = {{"kind", "logistic"}, {"vartheta", s.vartheta()}}; break;
    case Stdf::Kind::Independence: j = {{"kind", "independence"}}; break;
    case Stdf::Kind::DNormMC: throw CapabilityError("Monte Carlo stdfs are echoed from their source document only");
    case Stdf::Kind::AlphaTransformed: {
      const auto v = s.logistic_parameter();
      if (!v) throw CapabilityError("only closed-form stdfs can be written to a config");
      j = *v == 1.0 ? Json{{"kind", "independence"}} : Json{{"kind", "logistic"}, {"vartheta", *v}};
      break;
    }
  }
  j["dim"] = s.dim();
  return j;
}

// Inverse of parse_model_config for closed-form models (1-based indices).
inline Json model_to_json(const ClusteredModelSpec& m, std::optional<std::uint64_t> seed = std::nullopt) {
  Json doc;
  Json part = Json::array();
  for (const auto& b : m.partition.blocks) {
    Json blk = Json::array();
    for (int i : b) blk.push_back(i + 1);
    part.push_back(blk);
  }
  doc["partition"] = part;
  Json cl = Json::array();
  for (int k = 0; k < m.K(); ++k)
    cl.push_back({{"generator", {{"family", std::string(to_string(m.generators[k].family()))}, {"theta", m.generators[k].theta()}}},
                  {"stdf", stdf_to_json(m.stdfs[k])}});
  doc["clusters"] = cl;
  switch (m.radial.kind) {
    case RadialCopulaSpec::Kind::Independence: doc["radial"] = {{"kind", "independence"}}; break;
    case RadialCopulaSpec::Kind::Gumbel: doc["radial"] = {{"kind", "gumbel"}, {"vartheta", m.radial.vartheta}}; break;
    case RadialCopulaSpec::Kind::Gaussian: {
      Json c = Json::array();
      for (Eigen::Index a = 0; a < m.radial.corr.rows(); ++a) {
        Json row = Json::array();
        for (Eigen::Index b = 0; b < m.radial.corr.cols(); ++b) row.push_back(m.radial.corr(a, b));
        c.push_back(row);
      }
      doc["radial"] = {{"kind", "gaussian"}, {"corr", c}};
      break;
    }
  }
  if (seed) doc["seed"] = *seed;
  return doc;
}

}  // namespace archimax
