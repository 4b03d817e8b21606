#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ada/trace_io.hpp"

using namespace ada;

namespace {

std::vector<OperatorTrace> small_run() {
  SessionConfig c;
  c.games_per_operator = 3;
  c.trials_per_game = 6;
  c.abc_update_interval_games = 1;
  c.abc.accepted_target = 50;
  c.abc.batch_size = 500;
  c.abc.max_batches = 2;
  c.seed = 11;
  return run_monte_carlo(c, 2, 1).traces;
}

}  // namespace

TEST_CASE("real formatting round trips") {
  for (double v : {0.1, 1.0 / 3.0, 0.0, -2.5, 1e-300, 123456.789}) CHECK(std::stod(format_real(v)) == v);
  CHECK(format_real(std::nan("")) == "nan");
  CHECK(format_real(0.5) == "0.5");
}

TEST_CASE("trace CSV round trip") {
  const auto traces = small_run();
  const std::string text = format_trace_csv(traces);
  CHECK(text.rfind(std::string(kTraceCsvHeader), 0) == 0);
  CHECK(text == format_trace_csv(traces));
  const auto back = parse_trace_csv(text);
  std::vector<InteractionRecord> flat;
  for (const auto& t : traces) flat.insert(flat.end(), t.records.begin(), t.records.end());
  REQUIRE(back.size() == flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const auto& a = flat[i];
    const auto& b = back[i];
    CHECK(a.operator_index == b.operator_index);
    CHECK(a.game_index == b.game_index);
    CHECK(a.game_id == b.game_id);
    CHECK(a.trial == b.trial);
    CHECK(a.context == b.context);
    CHECK(a.initial == b.initial);
    CHECK(a.predicted == b.predicted);
    CHECK(a.suggestion == b.suggestion);
    CHECK(a.optimal == b.optimal);
    CHECK(a.agreement == b.agreement);
    CHECK(a.d == b.d);
    CHECK(a.d_ind == b.d_ind);
    CHECK(a.final_selection == b.final_selection);
    CHECK(a.payoff == b.payoff);
    CHECK(a.foregone == b.foregone);
    CHECK(a.capability == b.capability);
    CHECK(a.rho == b.rho);
    CHECK(a.preference == b.preference);
    CHECK(a.preference_ind == b.preference_ind);
    CHECK(a.ambiguous == b.ambiguous);
  }
}

TEST_CASE("trace columns are matched by name") {
  const auto recs = parse_trace_csv("d,capability,agreement,operator\n1,0.75,-1,3\n0,0.5,1,3\n", kObservationColumns);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].operator_index == 3);
  CHECK(recs[0].d == 1);
  CHECK(recs[0].agreement == Agreement::Disagree);
  CHECK(recs[1].capability == 0.5);
  try {
    parse_trace_csv("operator,d\n0,1\n", kObservationColumns);
    FAIL("expected missing-column error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("agreement") != std::string::npos);
    CHECK(std::string(e.what()).find("capability") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_trace_csv("operator,d,agreement,capability\n0,x,1,0.5\n", kObservationColumns), ParseError);
}

TEST_CASE("JSON outputs") {
  const auto traces = small_run();
  const auto agg = aggregate(traces, 3);
  const auto j = aggregate_to_json(agg);
  CHECK(j["n_operators"] == 2);
  CHECK(j["reliance"]["mean"].size() == 3);
  CHECK(j["overall_mean_d"].get<double>() == agg.overall_mean_d);

  InteractionRecord r;
  r.capability = std::nan("");
  CHECK(record_to_json(r).dump().find("\"capability\":null") != std::string::npos);

  const auto ups = abc_updates_to_json(traces);
  REQUIRE(ups.size() == 2);

  const std::string series = format_series_csv(agg);
  CHECK(series.rfind("game,mean_d,std_d,mean_rho,std_rho\n", 0) == 0);
  CHECK(std::count(series.begin(), series.end(), '\n') == 4);

  const auto m = make_manifest("simulate", parse_config("seed = 4\n"), {"trace.csv"});
  CHECK(m["format_version"] == kFormatVersion);
  CHECK(m["seed"] == 4);
  CHECK(m["outputs"][0] == "trace.csv");
}

TEST_CASE("posterior and compare tables") {
  const std::vector<PosteriorSample> s{{0.01, 0.02, 0.3, 0.6, 0.001, 7}};
  const auto text = format_posterior_csv(s);
  CHECK(text == "b1,b2,s,theta,distance\n0.01,0.02,0.3,0.6,0.001\n");

  CompareCell cell;
  cell.theta = 0.6;
  cell.s = 0.5;
  cell.b2 = 0.03;
  cell.a.overall_mean_d = 0.6;
  cell.b.overall_mean_d = 0.5;
  cell.percent_difference = percent_difference(0.6, 0.5);
  const auto csv = format_compare_csv(std::vector<CompareCell>{cell});
  CHECK(csv.rfind("theta,s,b2,mean_d_a,mean_d_b,percent_difference", 0) == 0);
  cell.percent_difference.reset();
  const auto j = compare_to_json(std::vector<CompareCell>{cell}, CompareGrid{});
  CHECK(j.dump().find("null") != std::string::npos);
}
