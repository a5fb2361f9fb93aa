#include "reflect/core.hpp"

#include <charconv>
#include <cstdio>

namespace reflect {

std::string_view to_string(Action a) {
  switch (a) {
    case Action::North: return "N";
    case Action::South: return "S";
    case Action::East: return "E";
    case Action::West: return "W";
    case Action::Wait: return "wait";
  }
  return "?";
}

std::optional<Action> parse_action(std::string_view s) {
  if (s == "N" || s == "north" || s == "North") return Action::North;
  if (s == "S" || s == "south" || s == "South") return Action::South;
  if (s == "E" || s == "east" || s == "East") return Action::East;
  if (s == "W" || s == "west" || s == "West") return Action::West;
  if (s == "wait" || s == "Wait") return Action::Wait;
  return std::nullopt;
}

std::string_view to_string(CellType t) {
  switch (t) {
    case CellType::Empty: return "empty";
    case CellType::Wall: return "wall";
    case CellType::Reward: return "reward";
    case CellType::Hazard: return "hazard";
    case CellType::Sign: return "sign";
    case CellType::Exit: return "exit";
  }
  return "?";
}

std::optional<CellType> parse_cell_type(std::string_view s) {
  for (auto t : {CellType::Empty, CellType::Wall, CellType::Reward, CellType::Hazard,
                 CellType::Sign, CellType::Exit}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

namespace {

void append_coord(std::string& out, Coord c) {
  if (c == kRemoved) {
    out += 'x';
    return;
  }
  out += std::to_string(c.x);
  out += ',';
  out += std::to_string(c.y);
}

int parse_int(std::string_view s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw InvalidState("bad integer in state key: " + std::string(s));
  }
  return v;
}

Coord parse_coord(std::string_view s) {
  if (s == "x") return kRemoved;
  const auto comma = s.find(',');
  if (comma == std::string_view::npos) throw InvalidState("bad coordinate: " + std::string(s));
  return {parse_int(s.substr(0, comma)), parse_int(s.substr(comma + 1))};
}

}  // namespace

// Layout: "<ax>,<ay>|<npc>;<npc>|<consumed-hex>"
std::string StateKey::str() const {
  std::string out;
  append_coord(out, agent);
  out += '|';
  for (std::size_t i = 0; i < npcs.size(); ++i) {
    if (i) out += ';';
    append_coord(out, npcs[i]);
  }
  out += '|';
  char buf[24];
  std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(consumed));
  out += buf;
  return out;
}

StateKey StateKey::parse(std::string_view s) {
  const auto bar1 = s.find('|');
  const auto bar2 = bar1 == std::string_view::npos ? bar1 : s.find('|', bar1 + 1);
  if (bar2 == std::string_view::npos) throw InvalidState("bad state key: " + std::string(s));
  StateKey k;
  k.agent = parse_coord(s.substr(0, bar1));
  auto npcs = s.substr(bar1 + 1, bar2 - bar1 - 1);
  while (!npcs.empty()) {
    const auto semi = npcs.find(';');
    k.npcs.push_back(parse_coord(npcs.substr(0, semi)));
    if (semi == std::string_view::npos) break;
    npcs.remove_prefix(semi + 1);
  }
  const auto hex = s.substr(bar2 + 1);
  auto [p, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), k.consumed, 16);
  if (ec != std::errc{} || p != hex.data() + hex.size()) {
    throw InvalidState("bad consumed mask: " + std::string(s));
  }
  return k;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace reflect
