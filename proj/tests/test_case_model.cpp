#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "drbse/case_model.hpp"
#include "drbse/matpower.hpp"

using namespace drbse;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

NetworkCase two_bus(double g = 0.0, double b = -10.0) {
  NetworkCase net;
  net.reference_bus = 1;
  net.buses.push_back({1, 0, 0, false, 1.0, 0.0});
  net.buses.push_back({2, 0, 0, false, 1.0, 0.0});
  net.branches.push_back({1, 2, g, b, 1.0});
  net.finalize();
  return net;
}

}  // namespace

TEST_CASE("matpower parse: IEEE cases have the expected shape") {
  NetworkCase n14 = parse_matpower_case(read_file(std::string(DRBSE_DATA_DIR) + "/case14.m"));
  CHECK(n14.n_buses() == 14);
  CHECK(n14.n_branches() == 20);
  CHECK(n14.reference_bus == 1);
  CHECK(n14.buses[n14.bus_pos(7)].is_zero_injection);
  // bus 9 carries the 0.19 p.u. capacitor; its branches have no charging
  CHECK(n14.buses[n14.bus_pos(9)].b_sh == Catch::Approx(0.19));
  // half of line 1-2's 0.0528 charging lands on bus 2, plus lines 2-3/2-4/2-5
  CHECK(n14.buses[n14.bus_pos(2)].b_sh ==
        Catch::Approx((0.0528 + 0.0438 + 0.0340 + 0.0346) / 2));
  CHECK(n14.buses[n14.bus_pos(1)].theta_true == 0.0);

  NetworkCase n118 = parse_matpower_case(read_file(std::string(DRBSE_DATA_DIR) + "/case118.m"));
  CHECK(n118.n_buses() == 118);
  CHECK(n118.n_branches() == 186);
}

TEST_CASE("matpower parse: series admittance arithmetic") {
  std::string text = R"(function mpc = t
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1.0 0.0 0 1 1.06 0.94;
 2 1 10 5 0 0 1 1.0 0.0 0 1 1.06 0.94;
];
mpc.gen = [
 1 10 0 99 -99 1.0 100 1 250 0;
];
mpc.branch = [
 1 2 0 0.1 0 0 0 0 0 0 1;
];
)";
  NetworkCase net = parse_matpower_case(text);
  CHECK(net.branches[0].g == Catch::Approx(0.0));
  CHECK(net.branches[0].b == Catch::Approx(-10.0));
}

TEST_CASE("matpower parse: phase shifter is rejected") {
  std::string text = R"(function mpc = t
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1.0 0.0 0 1 1.06 0.94;
 2 1 10 5 0 0 1 1.0 0.0 0 1 1.06 0.94;
];
mpc.gen = [
 1 10 0 99 -99 1.0 100 1 250 0;
];
mpc.branch = [
 1 2 0 0.1 0 0 0 0 0 30 1;
];
)";
  CHECK_THROWS_AS(parse_matpower_case(text), UnsupportedFeatureError);
}

TEST_CASE("matpower parse: malformed rows carry a line number") {
  std::string text = "function mpc = t\nmpc.baseMVA = 100;\nmpc.bus = [\n 1 3 zz 0;\n];\n";
  try {
    parse_matpower_case(text);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("case json round-trip is the identity") {
  NetworkCase n14 = parse_matpower_case(read_file(std::string(DRBSE_DATA_DIR) + "/case14.m"));
  NetworkCase back = load_case_json(save_case_json(n14));
  REQUIRE(back.n_buses() == n14.n_buses());
  REQUIRE(back.n_branches() == n14.n_branches());
  CHECK(back.base_mva == n14.base_mva);
  CHECK(back.reference_bus == n14.reference_bus);
  for (int i = 0; i < n14.n_buses(); ++i) {
    CHECK(back.buses[i].id == n14.buses[i].id);
    CHECK(back.buses[i].g_sh == n14.buses[i].g_sh);
    CHECK(back.buses[i].b_sh == n14.buses[i].b_sh);
    CHECK(back.buses[i].is_zero_injection == n14.buses[i].is_zero_injection);
    CHECK(back.buses[i].v_true == n14.buses[i].v_true);
    CHECK(back.buses[i].theta_true == n14.buses[i].theta_true);
  }
  for (int e = 0; e < n14.n_branches(); ++e) {
    CHECK(back.branches[e].from == n14.branches[e].from);
    CHECK(back.branches[e].g == n14.branches[e].g);
    CHECK(back.branches[e].tap == n14.branches[e].tap);
  }
}

TEST_CASE("case json rejects bad documents") {
  json j = case_to_json(two_bus());
  SECTION("missing reference_bus") {
    j.erase("reference_bus");
    CHECK_THROWS_AS(case_from_json(j), SchemaError);
  }
  SECTION("duplicate bus id") {
    j["buses"].push_back(j["buses"][0]);
    CHECK_THROWS_AS(case_from_json(j), ValidationError);
  }
  SECTION("disconnected network") {
    // two islands
    j["buses"].push_back({{"id", 3}, {"g_sh", 0.0}, {"b_sh", 0.0}, {"zero_injection", false},
                          {"v_true", 1.0}, {"theta_true", 0.0}});
    CHECK_THROWS_AS(case_from_json(j), ValidationError);
  }
}

TEST_CASE("partition: 14-bus two-area split has three tie-lines") {
  NetworkCase net = load_case_json(read_file(std::string(DRBSE_DATA_DIR) + "/ieee14.json"));
  AreaPartition part = partition_from_json(
      json::parse(read_file(std::string(DRBSE_DATA_DIR) + "/partition14.json")));
  auto views = build_partition(net, part);
  REQUIRE(views.size() == 2);
  int owned = 0;
  for (const AreaView& v : views)
    for (const auto& [b, ties] : v.owned_ties) owned += static_cast<int>(ties.size());
  CHECK(owned == 3);
  CHECK(views[0].neighbors == std::vector<int>{2});
  CHECK(views[1].owned_ties.empty());
  // tie (5,6) is owned by area 1 and visible from both sides
  CHECK(views[0].tie_lines.at(2).size() == 3);
  CHECK(views[1].tie_lines.at(1).size() == 3);
}

TEST_CASE("partition: 118-bus three-area split matches the tie-line budget") {
  NetworkCase net = load_case_json(read_file(std::string(DRBSE_DATA_DIR) + "/ieee118.json"));
  AreaPartition part = partition_from_json(
      json::parse(read_file(std::string(DRBSE_DATA_DIR) + "/partition118.json")));
  auto views = build_partition(net, part);
  REQUIRE(views.size() == 3);
  int owned = 0, internal = 0;
  for (const AreaView& v : views) {
    internal += static_cast<int>(v.internal_branches.size());
    for (const auto& [b, ties] : v.owned_ties) owned += static_cast<int>(ties.size());
  }
  CHECK(owned == 12);
  CHECK(internal == 174);
  int total_buses = 0;
  for (const AreaView& v : views) total_buses += static_cast<int>(v.buses.size());
  CHECK(total_buses == 118);
}

TEST_CASE("partition: single area has no coupling") {
  NetworkCase net = two_bus();
  AreaPartition part;
  part.assignment = {{1, 1}, {2, 1}};
  part.area_count = 1;
  auto views = build_partition(net, part);
  REQUIRE(views.size() == 1);
  CHECK(views[0].tie_lines.empty());
  CHECK(views[0].neighbors.empty());
  CHECK(views[0].boundary_copies.empty());
}

TEST_CASE("partition: validation failures") {
  NetworkCase net = two_bus();
  SECTION("empty area") {
    AreaPartition part;
    part.assignment = {{1, 1}, {2, 1}};
    part.area_count = 2;
    CHECK_THROWS_AS(build_partition(net, part), ValidationError);
  }
  SECTION("unassigned bus") {
    AreaPartition part;
    part.assignment = {{1, 1}};
    part.area_count = 1;
    CHECK_THROWS_AS(build_partition(net, part), ValidationError);
  }
}

TEST_CASE("partition invariants on the 118-bus split") {
  NetworkCase net = load_case_json(read_file(std::string(DRBSE_DATA_DIR) + "/ieee118.json"));
  AreaPartition part = partition_from_json(
      json::parse(read_file(std::string(DRBSE_DATA_DIR) + "/partition118.json")));
  auto views = build_partition(net, part);

  // symmetry: a tie in Gamma_{a,b} appears in Gamma_{b,a}
  for (const AreaView& v : views)
    for (const auto& [b, ties] : v.tie_lines)
      for (int e : ties) {
        const auto& back = views[b - 1].tie_lines.at(v.area);
        CHECK(std::find(back.begin(), back.end(), e) != back.end());
      }

  // ownership: every tie-line in exactly one owned set, owner has smaller index
  std::map<int, int> owner_count;
  for (const AreaView& v : views)
    for (const auto& [b, ties] : v.owned_ties) {
      CHECK(v.area < b);
      for (int e : ties) owner_count[e]++;
    }
  for (const auto& [e, c] : owner_count) CHECK(c == 1);

  // boundary copies never include home buses
  for (const AreaView& v : views)
    for (int bus : v.boundary_copies) CHECK_FALSE(v.has_bus(bus));
}

TEST_CASE("incidence matrices") {
  SECTION("two-bus single branch") {
    NetworkCase net = two_bus();
    auto [A, Ar] = incidence_matrices(net);
    REQUIRE(A.rows() == 2);
    REQUIRE(A.cols() == 1);
    CHECK(A.coeff(0, 0) == 1.0);
    CHECK(A.coeff(1, 0) == -1.0);
    REQUIRE(Ar.rows() == 1);
    CHECK(Ar.coeff(0, 0) == -1.0);  // reference row removed
  }
  SECTION("path graph 1-2-3: one +1 and one -1 per column") {
    NetworkCase net;
    net.reference_bus = 1;
    for (int id : {1, 2, 3}) net.buses.push_back({id, 0, 0, false, 1.0, 0.0});
    net.branches.push_back({1, 2, 1.0, -5.0, 1.0});
    net.branches.push_back({2, 3, 1.0, -5.0, 1.0});
    net.finalize();
    auto [A, Ar] = incidence_matrices(net);
    for (int c = 0; c < 2; ++c) {
      int plus = 0, minus = 0;
      for (int r = 0; r < 3; ++r) {
        if (A.coeff(r, c) == 1.0) ++plus;
        if (A.coeff(r, c) == -1.0) ++minus;
      }
      CHECK(plus == 1);
      CHECK(minus == 1);
    }
  }
  SECTION("14-bus: reduced matrix drops one row; identity A_r' theta = theta_i - theta_j") {
    NetworkCase net = parse_matpower_case(read_file(std::string(DRBSE_DATA_DIR) + "/case14.m"));
    auto [A, Ar] = incidence_matrices(net);
    CHECK(Ar.rows() == 13);
    Eigen::VectorXd theta(14);
    for (int i = 0; i < 14; ++i) theta[i] = net.buses[i].theta_true;
    Eigen::VectorXd theta_r(13);
    const int ref = net.bus_pos(net.reference_bus);
    int k = 0;
    for (int i = 0; i < 14; ++i)
      if (i != ref) theta_r[k++] = theta[i];
    Eigen::VectorXd d = Ar.transpose() * theta_r;
    for (int e = 0; e < net.n_branches(); ++e) {
      const Branch& br = net.branches[e];
      CHECK(d[e] == Catch::Approx(theta[net.bus_pos(br.from)] - theta[net.bus_pos(br.to)])
                        .margin(1e-14));
    }
  }
}
