#include <doctest.h>

#include <nanotomo/config.hpp>
#include <nanotomo/errors.hpp>

using namespace nanotomo;

TEST_SUITE("config") {

TEST_CASE("defaults validate and mirror the standard campaign") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.analysis.threshold_level == 0.1);
  CHECK(c.campaign.bias_currents_uA.size() == 21);
  CHECK(c.campaign.mean_photon_numbers.size() == 36);
  CHECK(!c.fit.shared_eta);
  CHECK(!c.analysis.model.gap_eV);
}

TEST_CASE("keys, lists, ranges and comments parse") {
  const auto c = parse_config("# comment\n"
                              "campaign.wavelengths_nm = 750, 1500  # trailing\n"
                              "campaign.currents_uA = 13:15:1\n"
                              "campaign.photon_count = 12\n"
                              "fit.shared_eta = true\n"
                              "analysis.model.gap_eV = 0.0025\n"
                              "analysis.sigma_override.1500nm.n2 = 0.3\n"
                              "output.dir = /tmp/x\n",
                              "t.cfg");
  CHECK(c.campaign.wavelengths_nm == std::vector<double>{750.0, 1500.0});
  CHECK(c.campaign.bias_currents_uA == std::vector<double>{13.0, 14.0, 15.0});
  CHECK(c.campaign.mean_photon_numbers.size() == 12);
  CHECK(c.fit.shared_eta);
  CHECK(*c.analysis.model.gap_eV == 0.0025);
  CHECK(c.analysis.sigma_overrides.at({1500.0, 2}) == 0.3);
  CHECK(c.output_dir == "/tmp/x");
}

TEST_CASE("echo parses back to the same configuration") {
  auto c = parse_config("analysis.model.gap_eV = 0.0025\nanalysis.model.i0_uA = 40\nanalysis.model.beta = 1\n"
                        "campaign.seed = 17\nanalysis.sigma_override.1000nm.n1 = 0.25\n",
                        "t");
  const auto text = c.echo();
  CHECK(text.find("analysis.threshold_level = 0.1") != std::string::npos);
  CHECK(text.find("analysis.model.beta = 1") != std::string::npos);
  const auto back = parse_config(text, "echo");
  CHECK(back.echo() == text);
  CHECK(back.campaign.mean_photon_numbers == c.campaign.mean_photon_numbers);
  CHECK(back.campaign.bias_currents_uA == c.campaign.bias_currents_uA);
  CHECK(back.campaign.seed == 17);
}

TEST_CASE("unset fluctuation constants are echoed as unset") {
  const auto text = RunConfig{}.echo();
  CHECK(text.find("analysis.model.gap_eV") != std::string::npos);
  CHECK(text.find("not set") != std::string::npos);
  CHECK(!parse_config(text, "echo").analysis.model.gap_eV);
}

TEST_CASE("errors carry the source and line") {
  try {
    parse_config("fit.max_order = 3\nbogus.key = 1\n", "run.cfg");
    FAIL("no exception");
  } catch (const ConfigError &e) {
    CHECK(std::string(e.what()).find("run.cfg:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("fit.max_order = three\n", "t"), ConfigError);
  CHECK_THROWS_AS(parse_config("no equals sign\n", "t"), ConfigError);
  CHECK_THROWS_AS(parse_config("fit.shared_eta = maybe\n", "t"), ConfigError);
}

TEST_CASE("validation rejects empty grids and out-of-range constants") {
  CHECK_THROWS_AS(parse_config("campaign.currents_uA =\n", "t").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("campaign.wavelengths_nm =\n", "t").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("analysis.threshold_level = 1\n", "t").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("analysis.threshold_level = 0\n", "t").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("analysis.gamma_lo = 1\nanalysis.gamma_hi = -1\n", "t").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("campaign.currents_uA = 28, 30\n", "t").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("analysis.model.beta = 0\n", "t").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("campaign.photon_min = 0\n", "t").validate(), ConfigError);
}

TEST_CASE("missing config file is an I/O error") {
  CHECK_THROWS_AS(load_config("/nonexistent/run.cfg"), IoError);
}

} // TEST_SUITE
