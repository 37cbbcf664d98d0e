#pragma once

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "drbse/case_model.hpp"
#include "drbse/errors.hpp"

namespace drbse {

namespace detail {

struct MpTable {
  std::vector<std::vector<double>> rows;
  std::vector<int> line_numbers;
};

inline double mp_number(const std::string& tok, int line) {
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw ParseError("line " + std::to_string(line) + ": expected a number, got '" + tok + "'");
  return v;
}

}  // namespace detail

// Parses the MATPOWER-style case text (mpc.baseMVA / mpc.bus / mpc.gen /
// mpc.branch matrices). Line charging and fixed bus shunts are folded into
// per-bus shunt admittances; branch series impedance becomes (g, b); the
// solved bus voltages become the true state, angle-shifted so the reference
// bus sits at zero. Phase-shifting branches are rejected.
inline NetworkCase parse_matpower_case(const std::string& text, int reference_bus = 1) {
  std::map<std::string, detail::MpTable> tables;
  double base_mva = 0.0;
  bool saw_base = false;

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::string current;  // table currently being filled
  while (std::getline(in, line)) {
    ++line_no;
    if (auto pc = line.find('%'); pc != std::string::npos) line = line.substr(0, pc);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    line = line.substr(first);

    if (current.empty()) {
      if (line.rfind("mpc.baseMVA", 0) == 0) {
        auto eq = line.find('=');
        if (eq == std::string::npos)
          throw ParseError("line " + std::to_string(line_no) + ": malformed baseMVA");
        std::string rhs = line.substr(eq + 1);
        for (char& c : rhs)
          if (c == ';') c = ' ';
        base_mva = detail::mp_number(
            rhs.substr(rhs.find_first_not_of(" \t"),
                       rhs.find_last_not_of(" \t") - rhs.find_first_not_of(" \t") + 1),
            line_no);
        saw_base = true;
      } else if (line.rfind("mpc.", 0) == 0 && line.find("= [") != std::string::npos) {
        auto dot = line.find('.');
        auto sp = line.find_first_of(" \t=", dot);
        current = line.substr(dot + 1, sp - dot - 1);
        tables[current];  // create
      }
      continue;
    }

    if (line.rfind("];", 0) == 0 || line.rfind("]", 0) == 0) {
      current.clear();
      continue;
    }
    // one matrix row, ';'-terminated, whitespace separated
    for (char& c : line)
      if (c == ';' || c == ',') c = ' ';
    std::istringstream row_in(line);
    std::vector<double> row;
    std::string tok;
    while (row_in >> tok) row.push_back(detail::mp_number(tok, line_no));
    if (!row.empty()) {
      tables[current].rows.push_back(std::move(row));
      tables[current].line_numbers.push_back(line_no);
    }
  }

  if (!saw_base) throw ParseError("case text has no mpc.baseMVA");
  if (!tables.count("bus") || tables["bus"].rows.empty())
    throw ParseError("case text has no bus section");
  if (!tables.count("branch") || tables["branch"].rows.empty())
    throw ParseError("case text has no branch section");

  NetworkCase net;
  net.base_mva = base_mva;
  net.reference_bus = reference_bus;

  std::set<int> gen_buses;
  if (tables.count("gen")) {
    auto& t = tables["gen"];
    for (size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      if (row.size() < 8)
        throw ParseError("line " + std::to_string(t.line_numbers[r]) + ": gen row too short");
      if (row[7] != 0.0) gen_buses.insert(static_cast<int>(row[0]));
    }
  }

  auto& bt = tables["bus"];
  for (size_t r = 0; r < bt.rows.size(); ++r) {
    const auto& row = bt.rows[r];
    if (row.size() < 9)
      throw ParseError("line " + std::to_string(bt.line_numbers[r]) + ": bus row too short");
    Bus b;
    b.id = static_cast<int>(row[0]);
    b.g_sh = row[4] / base_mva;
    b.b_sh = row[5] / base_mva;
    b.is_zero_injection = row[2] == 0.0 && row[3] == 0.0 && !gen_buses.count(b.id);
    b.v_true = row[7];
    b.theta_true = row[8] * std::numbers::pi / 180.0;
    net.buses.push_back(b);
  }

  auto& et = tables["branch"];
  for (size_t r = 0; r < et.rows.size(); ++r) {
    const auto& row = et.rows[r];
    const int ln = et.line_numbers[r];
    if (row.size() < 9) throw ParseError("line " + std::to_string(ln) + ": branch row too short");
    if (row.size() >= 11 && row[10] == 0.0) continue;  // out of service
    if (row.size() >= 10 && row[9] != 0.0)
      throw UnsupportedFeatureError("line " + std::to_string(ln) +
                                    ": phase-shifting branch (shift angle " +
                                    std::to_string(row[9]) + " deg) is not supported");
    Branch br;
    br.from = static_cast<int>(row[0]);
    br.to = static_cast<int>(row[1]);
    const double rr = row[2], xx = row[3], bc = row[4];
    const double den = rr * rr + xx * xx;
    if (den == 0.0) throw ParseError("line " + std::to_string(ln) + ": branch with zero impedance");
    br.g = rr / den;
    br.b = -xx / den;
    br.tap = row[8] != 0.0 ? row[8] : 1.0;
    net.branches.push_back(br);
    // half line-charging aggregates onto the terminal buses (tap side scaled)
    auto bump = [&](int bus_id, double amount) {
      for (Bus& b : net.buses)
        if (b.id == bus_id) {
          b.b_sh += amount;
          return;
        }
      throw ParseError("line " + std::to_string(ln) + ": branch endpoint " +
                       std::to_string(bus_id) + " not in bus table");
    };
    bump(br.from, bc / 2.0 / (br.tap * br.tap));
    bump(br.to, bc / 2.0);
  }

  net.finalize();

  // the estimation reference angle is zero by convention
  const double shift = net.buses[net.bus_pos(net.reference_bus)].theta_true;
  for (Bus& b : net.buses) b.theta_true -= shift;
  return net;
}

}  // namespace drbse
