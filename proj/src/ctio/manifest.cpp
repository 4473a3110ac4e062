#include "covidseg/ctio/manifest.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace covidseg {

std::vector<std::string> Manifest::ids() const {
  std::vector<std::string> out;
  out.reserve(cases.size());
  for (const auto& c : cases) out.push_back(c.id);
  return out;
}

const CaseEntry& Manifest::find(const std::string& id) const {
  for (const auto& c : cases)
    if (c.id == id) return c;
  throw std::out_of_range("manifest has no case '" + id + "'");
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest " + path.string() + ": cannot open");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest " + path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  Manifest m;
  std::set<std::string> seen;
  for (const auto& c : j.at("cases")) {
    CaseEntry e{c.at("id").get<std::string>(), c.at("ct_path").get<std::string>(), c.at("label_path").get<std::string>()};
    if (!seen.insert(e.id).second) throw std::runtime_error("manifest " + path.string() + ": duplicate id '" + e.id + "'");
    if (e.ct_path.is_relative()) e.ct_path = base / e.ct_path;
    if (e.label_path.is_relative()) e.label_path = base / e.label_path;
    m.cases.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  const auto base = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    const auto r = p.lexically_proximate(base);
    return (r.empty() || *r.begin() == "..") ? p.string() : r.string();
  };
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : manifest.cases) {
    cases.push_back({{"id", c.id}, {"ct_path", rel(c.ct_path)}, {"label_path", rel(c.label_path)}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("manifest " + path.string() + ": cannot open for writing");
  out << nlohmann::json{{"cases", cases}}.dump(2) << '\n';
}

}  // namespace covidseg
