#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "drbse/bilinear.hpp"
#include "drbse/rng.hpp"
#include "oracles.hpp"

using namespace drbse;

namespace {

NetworkCase case14() {
  return load_case_json(oracle::read_file(std::string(DRBSE_DATA_DIR) + "/ieee14.json"));
}

AreaPartition partition14() {
  return partition_from_json(
      json::parse(oracle::read_file(std::string(DRBSE_DATA_DIR) + "/partition14.json")));
}

Eigen::VectorXd x_from_true_state(const NetworkCase& net, const StateLayout& lay) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(lay.dim());
  for (int id : lay.scope_buses) {
    const Bus& b = net.buses[net.bus_pos(id)];
    x[lay.col_alpha(id)] = 2.0 * std::log(b.v_true);
    if (int c = lay.col_theta(id); c >= 0) x[c] = b.theta_true;
  }
  return x;
}

}  // namespace

TEST_CASE("y_from_state basics") {
  NetworkCase net;
  net.reference_bus = 1;
  net.buses.push_back({1, 0, 0, false, 1.0, 0.0});
  net.buses.push_back({2, 0, 0, false, 1.0, 0.0});
  net.branches.push_back({1, 2, 1.0, -10.0, 1.0});
  net.finalize();
  StageOneLayout lay = make_stage1_layout(net);
  REQUIRE(lay.dim() == 2 + 2);

  SECTION("flat start") {
    Eigen::VectorXd V = Eigen::VectorXd::Ones(2), th = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd y = y_from_state(net, lay, V, th);
    CHECK(y[lay.col_u(1)] == 1.0);
    CHECK(y[lay.col_k(0)] == 1.0);
    CHECK(y[lay.col_l(0)] == 0.0);
  }
  SECTION("quadrature") {
    Eigen::VectorXd V = Eigen::VectorXd::Ones(2), th(2);
    th << std::numbers::pi / 2, 0.0;
    Eigen::VectorXd y = y_from_state(net, lay, V, th);
    CHECK(y[lay.col_k(0)] == Catch::Approx(0.0).margin(1e-15));
    CHECK(y[lay.col_l(0)] == Catch::Approx(1.0));
  }
  SECTION("generic point") {
    Eigen::VectorXd V(2), th(2);
    V << 1.05, 0.98;
    th << 0.1, -0.05;
    Eigen::VectorXd y = y_from_state(net, lay, V, th);
    CHECK(y[lay.col_k(0)] == Catch::Approx(1.05 * 0.98 * std::cos(0.15)));
    CHECK(y[lay.col_l(0)] == Catch::Approx(1.05 * 0.98 * std::sin(0.15)));
  }
}

TEST_CASE("layout dimensions: N + 2b globally, local copies include incident ties") {
  NetworkCase net = case14();
  StageOneLayout global = make_stage1_layout(net);
  CHECK(global.dim() == 14 + 2 * 20);

  AreaPartition part = partition14();
  auto views = build_partition(net, part);
  StageOneLayout a1 = make_stage1_layout(net, part, views[0]);
  // area 1: buses {1..5}, internal branches {1-2,1-5,2-3,2-4,2-5,3-4,4-5}, ties {4-7,4-9,5-6}
  CHECK(a1.dim() == 5 + 2 * (7 + 3));
}

TEST_CASE("nonlinear transform point values") {
  NetworkCase net;
  net.reference_bus = 1;
  net.buses.push_back({1, 0, 0, false, 1.0, 0.0});
  net.buses.push_back({2, 0, 0, false, 1.0, 0.0});
  net.branches.push_back({1, 2, 1.0, -10.0, 1.0});
  net.finalize();
  StageOneLayout ylay = make_stage1_layout(net);
  IntermediateLayout ulay = make_intermediate_layout(net);

  SECTION("identity point: U=1, K=1, L=0") {
    Eigen::VectorXd y(4);
    y << 1.0, 1.0, 1.0, 0.0;
    Eigen::VectorXd u = nonlinear_transform(y, ylay, ulay);
    CHECK(u[0] == 0.0);
    CHECK(u[1] == 0.0);
    CHECK(u[2] == Catch::Approx(0.0).margin(1e-15));  // alpha_12
    CHECK(u[3] == Catch::Approx(0.0).margin(1e-15));  // theta_12
  }
  SECTION("quadrature: K=0, L=1") {
    Eigen::VectorXd y(4);
    y << 1.0, 1.0, 0.0, 1.0;
    Eigen::VectorXd u = nonlinear_transform(y, ylay, ulay);
    CHECK(u[2] == Catch::Approx(0.0).margin(1e-15));
    CHECK(u[3] == Catch::Approx(std::numbers::pi / 2));
  }
  SECTION("round-trip through y_from_state") {
    Eigen::VectorXd V(2), th(2);
    V << 1.05, 0.98;
    th << 0.15, 0.0;
    Eigen::VectorXd u = nonlinear_transform(y_from_state(net, ylay, V, th), ylay, ulay);
    CHECK(u[2] == Catch::Approx(std::log(1.05 * 1.05 * 0.98 * 0.98)).margin(1e-12));
    CHECK(u[3] == Catch::Approx(0.15).margin(1e-12));
  }
  SECTION("domain errors name the element") {
    Eigen::VectorXd y(4);
    y << -1.0, 1.0, 1.0, 0.0;
    CHECK_THROWS_AS(nonlinear_transform(y, ylay, ulay), DomainError);
    y << 1.0, 1.0, 0.0, 0.0;
    CHECK_THROWS_AS(nonlinear_transform(y, ylay, ulay), DomainError);
  }
}

TEST_CASE("exactness chain on random states") {
  NetworkCase net = case14();
  StageOneLayout ylay = make_stage1_layout(net);
  IntermediateLayout ulay = make_intermediate_layout(net);
  RngStream rng(123, "exactness");
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd V(14), th(14);
    for (int i = 0; i < 14; ++i) {
      V[i] = 0.95 + 0.1 * rng.next_double();
      th[i] = -0.5 + rng.next_double();
    }
    Eigen::VectorXd u = nonlinear_transform(y_from_state(net, ylay, V, th), ylay, ulay);
    Eigen::VectorXd u_direct = u_from_state(net, ulay, V, th);
    CHECK((u - u_direct).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("soft threshold: dead zone arithmetic") {
  CHECK(soft_threshold(0.5, 1.34) == 0.0);
  CHECK(soft_threshold(2.0, 1.34) == Catch::Approx(0.66));
  CHECK(soft_threshold(-2.0, 1.34) == Catch::Approx(-0.66));
}

TEST_CASE("soft threshold: proximal-map properties on random pairs") {
  RngStream rng(99, "prox");
  for (int i = 0; i < 10000; ++i) {
    const double lam = 2.0 * rng.next_double();
    const double x1 = 10.0 * (rng.next_double() - 0.5);
    const double x2 = 10.0 * (rng.next_double() - 0.5);
    const double s1 = soft_threshold(x1, lam), s2 = soft_threshold(x2, lam);
    CHECK(std::abs(s1) <= std::abs(x1));
    CHECK(s1 * x1 >= 0.0);                            // sign preserved or zero
    CHECK(std::abs(s1 - s2) <= std::abs(x1 - x2) + 1e-15);  // nonexpansive
  }
}

TEST_CASE("B y(true) reproduces the true measurement vector") {
  NetworkCase net = case14();
  MeasurementSet ms = true_measurements(net, full_plan(net));
  StageOneLayout ylay = make_stage1_layout(net);
  std::vector<int> idx(ms.size());
  for (int i = 0; i < ms.size(); ++i) idx[i] = i;
  Stage1System sys = build_stage1_system(net, ms, idx, ms.zero_injections, ylay);
  Eigen::VectorXd y = y_from_state(net, ylay, true_v(net), true_theta(net));
  Eigen::VectorXd z_true(ms.size());
  for (int i = 0; i < ms.size(); ++i) z_true[i] = ms.measurements[i].true_value;
  CHECK((sys.B * y - z_true).lpNorm<Eigen::Infinity>() < 1e-12);
  // zero-injection rows hold at the solved state
  CHECK((sys.E * y - sys.z_e).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("stage-1 row shapes") {
  NetworkCase net = case14();
  StageOneLayout ylay = make_stage1_layout(net);

  SECTION("v_squared row is a single +1") {
    MeasurementSet ms = true_measurements(net, {{MeasurementKind::v_squared, 3}});
    Stage1System sys = build_stage1_system(net, ms, {0}, {}, ylay);
    CHECK(sys.B.nonZeros() == 1);
    CHECK(sys.B.coeff(0, ylay.col_u(3)) == 1.0);
  }
  SECTION("p_flow row carries (g, -g, -b) with zero shunts and nominal tap") {
    // branch 9-10: r=0.03181 x=0.08450, no charging, no transformer
    int e = -1;
    for (int k = 0; k < net.n_branches(); ++k)
      if (net.branches[k].from == 9 && net.branches[k].to == 10) e = k;
    REQUIRE(e >= 0);
    Measurement m;
    m.kind = MeasurementKind::p_flow;
    m.branch = e;
    MeasurementSet ms = true_measurements(net, {m});
    Stage1System sys = build_stage1_system(net, ms, {0}, {}, ylay);
    const Branch& br = net.branches[e];
    CHECK(sys.B.coeff(0, ylay.col_u(9)) == Catch::Approx(br.g));
    CHECK(sys.B.coeff(0, ylay.col_k(e)) == Catch::Approx(-br.g));
    CHECK(sys.B.coeff(0, ylay.col_l(e)) == Catch::Approx(-br.b));
  }
  SECTION("measurement outside area scope fails construction") {
    AreaPartition part = partition14();
    auto views = build_partition(net, part);
    StageOneLayout a2 = make_stage1_layout(net, part, views[1]);
    MeasurementSet ms = true_measurements(net, {{MeasurementKind::v_squared, 1}});
    CHECK_THROWS_AS(build_stage1_system(net, ms, {0}, {}, a2), ValidationError);
  }
}

TEST_CASE("stage-2 matrix: C x(true) = u(true) globally at 1e-12") {
  NetworkCase net = case14();
  IntermediateLayout ulay = make_intermediate_layout(net, {4, 9});
  StateLayout xlay = make_state_layout(net);
  SpMat C = build_stage2_matrix(ulay, xlay);
  Eigen::VectorXd x = x_from_true_state(net, xlay);
  Eigen::VectorXd u = u_from_state(net, ulay, true_v(net), true_theta(net));
  CHECK((C * x - u).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("stage-2 row shapes") {
  NetworkCase net = case14();
  StateLayout xlay = make_state_layout(net);

  SECTION("theta row for a branch at the reference bus has a single -1") {
    // branch 1-2: reference bus 1 contributes no column
    IntermediateLayout ulay = make_intermediate_layout(net);
    SpMat C = build_stage2_matrix(ulay, xlay);
    int e12 = -1;
    for (size_t s = 0; s < ulay.branches.size(); ++s)
      if (ulay.branches[s].from == 1 && ulay.branches[s].to == 2) e12 = static_cast<int>(s);
    REQUIRE(e12 >= 0);
    Eigen::VectorXd row = C.row(ulay.row_theta_branch(e12)).transpose();
    CHECK(row.lpNorm<1>() == 1.0);
    CHECK(row[xlay.col_theta(2)] == -1.0);
  }
  SECTION("alpha branch row has exactly two +1 entries") {
    IntermediateLayout ulay = make_intermediate_layout(net);
    SpMat C = build_stage2_matrix(ulay, xlay);
    Eigen::VectorXd row = C.row(ulay.row_alpha_branch(0)).transpose();
    CHECK(row.lpNorm<1>() == 2.0);
    CHECK(row.maxCoeff() == 1.0);
    CHECK(row.minCoeff() == 0.0);
  }
  SECTION("row referencing a bus outside scope fails") {
    AreaPartition part = partition14();
    auto views = build_partition(net, part);
    IntermediateLayout u_a1 = make_intermediate_layout(net, part, views[0]);
    StateLayout x_a2 = make_state_layout(net, views[1]);
    CHECK_THROWS_AS(build_stage2_matrix(u_a1, x_a2), ValidationError);
  }
}

TEST_CASE("state_from_x inverts the log change of variables") {
  NetworkCase net = case14();
  StateLayout xlay = make_state_layout(net);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(xlay.dim());
  auto st = state_from_x(x, xlay);
  CHECK(st.at(1).v == 1.0);
  CHECK(st.at(1).theta == 0.0);

  x[xlay.col_alpha(5)] = 2.0 * std::log(1.05);
  st = state_from_x(x, xlay);
  CHECK(st.at(5).v == Catch::Approx(1.05).epsilon(1e-15));
}

TEST_CASE("area tie-line orientation is shared by both sides") {
  NetworkCase net = case14();
  AreaPartition part = partition14();
  auto views = build_partition(net, part);
  StageOneLayout a1 = make_stage1_layout(net, part, views[0]);
  StageOneLayout a2 = make_stage1_layout(net, part, views[1]);
  Eigen::VectorXd y1 = y_from_state(net, a1, true_v(net), true_theta(net));
  Eigen::VectorXd y2 = y_from_state(net, a2, true_v(net), true_theta(net));
  for (int e : views[0].incident_tie_branches()) {
    CHECK(y1[a1.col_k(e)] == Catch::Approx(y2[a2.col_k(e)]));
    CHECK(y1[a1.col_l(e)] == Catch::Approx(y2[a2.col_l(e)]));
  }
}
