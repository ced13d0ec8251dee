#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "jointnet/io.hpp"

using namespace jointnet;

namespace {

PopulationDataset parse(const std::string& text) {
  std::istringstream in(text);
  return io::read_dataset_csv(in);
}

std::string parse_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(DatasetCsv, EmptyFile) {
  EXPECT_EQ(parse_error(""), "no data rows");
  EXPECT_EQ(parse_error("individual,course,time,intervention_target,v1\n"), "no data rows");
}

TEST(DatasetCsv, HandWrittenFixture) {
  const auto d = parse(
      "individual,course,time,intervention_target,v1,v2\n"
      "a,1,1,0,0.5,1\n"
      "a,1,2,0,0.25,2\n"
      "a,1,3,0,0.125,3\n"
      "b,1,1,2,1,-1\n"
      "b,1,2,2,2,-2\n"
      "b,1,3,2,3,-3\n");
  ASSERT_EQ(d.size(), 2);
  EXPECT_EQ(d.num_variables, 2);
  EXPECT_EQ(d.individuals[0].sample_count(), 3);
  EXPECT_EQ(d.individuals[1].sample_count(), 3);
  EXPECT_FALSE(d.individuals[0].courses[0].intervention_target.has_value());
  EXPECT_EQ(d.individuals[1].courses[0].intervention_target, 1);
  EXPECT_EQ(d.individuals[0].courses[0].values(2, 0), 0.125);
  EXPECT_EQ(d.variable_names, (std::vector<std::string>{"v1", "v2"}));
}

TEST(DatasetCsv, ErrorsNameTheRow) {
  const std::string header = "individual,course,time,intervention_target,v1,v2\n";
  EXPECT_NE(parse_error(header + "a,1,1,0,1,2\na,1,3,0,1,2\n").find("row 3"), std::string::npos);
  EXPECT_NE(parse_error(header + "a,1,1,0,1\n").find("row 2"), std::string::npos);
  EXPECT_NE(parse_error(header + "a,1,1,0,1,x\n").find("row 2"), std::string::npos);
  EXPECT_NE(parse_error(header + "a,1,1,0,1,2\na,1,2,0,1,2\na,2,1,0,1,2\na,2,2,0,1,2\na,1,3,0,1,2\n").find("row 6"),
            std::string::npos);
  EXPECT_NE(parse_error(header + "a,1,1,3,1,2\n").find("row 2"), std::string::npos);
  EXPECT_NE(parse_error("time,course\n1,2\n").find("row 1"), std::string::npos);
  EXPECT_FALSE(parse_error(header + "a,1,1,0,1,2\n").empty());  // course shorter than 2
}

TEST(DatasetCsv, RoundTripIsExact) {
  const auto [data, truth] = generate_population(fixtures::small_regime(7));
  std::ostringstream out;
  io::write_dataset_csv(data, out);
  const auto back = parse(out.str());
  ASSERT_EQ(back.size(), data.size());
  for (int j = 0; j < data.size(); ++j) {
    EXPECT_EQ(back.individuals[j].id, data.individuals[j].id);
    ASSERT_EQ(back.individuals[j].courses.size(), data.individuals[j].courses.size());
    for (std::size_t e = 0; e < data.individuals[j].courses.size(); ++e) {
      EXPECT_EQ(back.individuals[j].courses[e].values, data.individuals[j].courses[e].values);
      EXPECT_EQ(back.individuals[j].courses[e].intervention_target, data.individuals[j].courses[e].intervention_target);
    }
  }
}

TEST(NetworkJson, RoundTripAndValidation) {
  const auto g = fixtures::random_network(6, 0.4, 3);
  EXPECT_EQ(io::network_from_json(io::to_json(g)), g);
  EXPECT_THROW(io::network_from_json(io::json::parse(R"({"P": 2, "parents": [[3], []]})")), ParseError);
  EXPECT_THROW(io::network_from_json(io::json::parse(R"({"P": 2, "parents": [[]]})")), ParseError);
}

TEST(TruthJson, RoundTrip) {
  const auto [data, truth] = generate_population(fixtures::small_regime(8));
  const auto back = io::truth_from_json(io::json::parse(io::to_json(truth).dump()));
  EXPECT_EQ(back.latent, truth.latent);
  EXPECT_EQ(back.prior, truth.prior);
  EXPECT_EQ(back.individuals, truth.individuals);
  for (std::size_t j = 0; j < truth.betas.size(); ++j) {
    EXPECT_EQ(back.betas[j], truth.betas[j]);
    EXPECT_EQ(back.alphas[j], truth.alphas[j]);
  }
}

TEST(PosteriorJson, RoundTrip) {
  const auto [data, truth] = generate_population(fixtures::small_regime(9));
  const ParentSpace space(4, 2);
  Hyperparameters hp;
  hp.lambda = Strength::infinity();
  const auto post = run_jni(build_score_table(data, space, hp.phi), space, truth.prior, hp);
  const auto doc = io::posterior_to_json(post, EstimatorKind::JNI, hp, "abc");
  EXPECT_EQ(doc.at("hyperparameters").at("lambda"), "inf");
  const auto back = io::posterior_from_json(io::json::parse(doc.dump()));
  EXPECT_EQ(back.latent, post.latent);
  for (std::size_t j = 0; j < post.individual.size(); ++j) EXPECT_EQ(back.individual[j], post.individual[j]);

  std::ostringstream csv;
  io::write_posterior_csv(post, csv);
  // header + P^2 latent rows + 2 J P^2 individual and feature rows
  const std::string text = csv.str();
  const auto lines = std::count(text.begin(), text.end(), '\n');
  EXPECT_EQ(lines, 1 + 16 + 2 * 3 * 16);
}
