#include "facetcoh/text.hpp"

#include <doctest.h>

#include <fstream>
#include <string>

using namespace facetcoh;

TEST_CASE("tokenize splits on non-alphanumeric runs and casefolds") {
  CHECK(tokenize("1982 mustang") == std::vector<std::string>{"1982", "mustang"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("Call-of-Duty  game") == std::vector<std::string>{"call", "of", "duty", "game"});
  CHECK(tokenize("  --ps4!! ") == std::vector<std::string>{"ps4"});
  CHECK(tokenize("caf\xC3\xA9 au lait") == std::vector<std::string>{"caf\xC3\xA9", "au", "lait"});
}

TEST_CASE("tokenize is idempotent on its joined output") {
  for (const char* text : {"Call-of-Duty  game", "new call of duty ghost game", "X/Y: z9", "  "}) {
    const auto once = tokenize(text);
    CHECK(tokenize(join(once, " ")) == once);
  }
}

TEST_CASE("normalize_facet trims, collapses whitespace and casefolds") {
  CHECK(normalize_facet("  Coupe ") == "coupe");
  CHECK(normalize_facet("birthday  gifts") == "birthday gifts");
  CHECK(normalize_facet("For Sale") == "for sale");
  CHECK(normalize_facet("\tgift\n ideas ") == "gift ideas");
  CHECK(normalize_facet("") == "");
}

TEST_CASE("porter_stem agrees with the reference stemmer on a fixed vocabulary") {
  // Expected stems were produced once by an independent Porter implementation
  // (reference-C variant) and frozen in the data file.
  std::ifstream in(FACETCOH_TEST_DATA "/porter_vocab.tsv");
  REQUIRE(in);
  std::string line;
  std::size_t checked = 0;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    const auto word = line.substr(0, tab);
    const auto stem = line.substr(tab + 1);
    INFO(word);
    CHECK(porter_stem(word) == stem);
    ++checked;
  }
  CHECK(checked > 1000);
}

TEST_CASE("porter_stem leaves non-alphabetic tokens alone") {
  CHECK(porter_stem("ps4") == "ps4");
  CHECK(porter_stem("1982") == "1982");
  CHECK(porter_stem("") == "");
}

TEST_CASE("fnv1a64 matches the published test vector") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}
