#include <doctest.h>

#include "couplesim/util/sha256.hpp"
#include "couplesim/util/text.hpp"

using namespace couplesim::util;

TEST_CASE("sha256 matches the standard test vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("trim and lowercase") {
  CHECK(trim("  \t hi there \n") == "hi there");
  CHECK(trim("   ").empty());
  CHECK(to_lower("HeLLo, World") == "hello, world");
}

TEST_CASE("normalize_whitespace collapses runs and lowercases") {
  CHECK(normalize_whitespace("  You\t\tNEVER \n apologize ") == "you never apologize");
  CHECK(normalize_whitespace("").empty());
}

TEST_CASE("word_padded keeps word boundaries and apostrophes") {
  CHECK(word_padded("Let's slow DOWN!") == " let's slow down ");
  CHECK(word_padded("It\xE2\x80\x99s fine") == " it's fine ");
  CHECK(word_padded("a,b") == " a b ");
}

TEST_CASE("split_lines handles LF and CRLF") {
  const auto lines = split_lines("a\r\nb\nc");
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "a");
  CHECK(lines[1] == "b");
  CHECK(lines[2] == "c");
}
