#include "pkm/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pkm/errors.hpp"

namespace pkm {

using nlohmann::json;

namespace {

Vec2 parse_vec2(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    fail(ErrorKind::ParseError, where + " must be a [x, y] pair");
  return Vec2(j[0].get<double>(), j[1].get<double>());
}

double parse_num(const json& j, const std::string& where) {
  if (!j.is_number()) fail(ErrorKind::ParseError, where + " must be a number");
  return j.get<double>();
}

}  // namespace

Mechanism mechanism_from_json_text(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, origin + ": " + e.what());
  }
  if (!root.is_object()) fail(ErrorKind::ParseError, origin + ": top level must be an object");
  for (const char* key : {"links", "joints", "ground", "ee"})
    if (!root.contains(key)) fail(ErrorKind::ParseError, origin + ": missing '" + key + "'");

  Mechanism m;
  m.name = root.value("name", std::string("mechanism"));

  if (!root["links"].is_array()) fail(ErrorKind::ParseError, "'links' must be an array");
  for (const auto& lj : root["links"]) {
    Link l;
    if (!lj.contains("id") || !lj["id"].is_string())
      fail(ErrorKind::ParseError, "every link needs a string 'id'");
    l.id = lj["id"].get<std::string>();
    if (lj.contains("length")) l.length = parse_num(lj["length"], "link length");
    if (lj.contains("mass")) l.mass = parse_num(lj["mass"], "link mass");
    if (lj.contains("inertia")) l.inertia = parse_num(lj["inertia"], "link inertia");
    if (lj.contains("com")) l.com = parse_vec2(lj["com"], "link com");
    m.links.push_back(l);
  }

  std::string ground_id = root["ground"].is_string() ? root["ground"].get<std::string>() : "";
  if (ground_id.empty()) fail(ErrorKind::ParseError, "'ground' must name a link");
  bool found = false;
  for (auto& l : m.links)
    if (l.id == ground_id) {
      l.ground = true;
      found = true;
    }
  if (!found) fail(ErrorKind::NoGroundLink, "'" + ground_id + "' not in links");

  if (!root["joints"].is_array()) fail(ErrorKind::ParseError, "'joints' must be an array");
  for (const auto& jj : root["joints"]) {
    Joint j;
    if (!jj.contains("id") || !jj["id"].is_string())
      fail(ErrorKind::ParseError, "every joint needs a string 'id'");
    j.id = jj["id"].get<std::string>();
    std::string kind = jj.value("kind", std::string("revolute"));
    if (kind == "revolute")
      j.kind = JointKind::Revolute;
    else if (kind == "prismatic")
      j.kind = JointKind::Prismatic;
    else
      fail(ErrorKind::UnsupportedJointKind, "joint '" + j.id + "': '" + kind + "'");
    for (const char* key : {"parent", "child"})
      if (!jj.contains(key) || !jj[key].is_string())
        fail(ErrorKind::ParseError, "joint '" + j.id + "' needs string '" + key + "'");
    j.parent = jj["parent"].get<std::string>();
    j.child = jj["child"].get<std::string>();
    if (jj.contains("anchor")) j.anchor = parse_vec2(jj["anchor"], "joint anchor");
    if (jj.contains("child_anchor")) j.child_anchor = parse_vec2(jj["child_anchor"], "joint child_anchor");
    if (jj.contains("axis")) j.axis = parse_vec2(jj["axis"], "joint axis");
    if (jj.contains("offset")) j.offset = parse_num(jj["offset"], "joint offset");
    j.actuated = jj.value("actuated", false);
    if (jj.contains("limits")) {
      const auto& lim = jj["limits"];
      if (!lim.is_array() || lim.size() != 2)
        fail(ErrorKind::ParseError, "joint '" + j.id + "' limits must be [lo, hi]");
      Limits L{parse_num(lim[0], "limit lo"), parse_num(lim[1], "limit hi")};
      if (L.lo >= L.hi) fail(ErrorKind::ParseError, "joint '" + j.id + "' limits must satisfy lo < hi");
      j.limits = L;
    }
    m.joints.push_back(j);
  }

  const auto& eej = root["ee"];
  if (!eej.is_object() || !eej.contains("link") || !eej["link"].is_string())
    fail(ErrorKind::ParseError, "'ee' must be an object with a 'link'");
  m.ee.link = eej["link"].get<std::string>();
  if (eej.contains("point")) m.ee.point = parse_vec2(eej["point"], "ee point");

  if (root.contains("reference_q")) {
    const auto& rq = root["reference_q"];
    if (!rq.is_array()) fail(ErrorKind::ParseError, "'reference_q' must be an array");
    Vec q(rq.size());
    for (size_t i = 0; i < rq.size(); ++i) q(i) = parse_num(rq[i], "reference_q entry");
    m.reference_q = q;
  }

  try {
    m.finalize();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::UnknownId)
      fail(ErrorKind::ParseError, origin + ": " + e.what());
    throw;
  }
  return m;
}

Mechanism load_mechanism(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ParseError, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return mechanism_from_json_text(ss.str(), path);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string fmt_row(const std::vector<double>& vals) {
  std::string out;
  for (size_t i = 0; i < vals.size(); ++i) {
    if (i) out += ", ";
    out += fmt(vals[i]);
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::ParseError, "cannot write '" + path + "'");
  out << content;
}

}  // namespace pkm
