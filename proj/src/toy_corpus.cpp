#include <algorithm>
#include <cctype>
#include <random>
#include <set>

#include "lenvae/textpipe.hpp"

namespace lenvae {

namespace {

bool is_class_symbol(const std::string& symbol) {
  return !symbol.empty() &&
         std::all_of(symbol.begin(), symbol.end(), [](unsigned char c) {
           return (c >= 'A' && c <= 'Z') || c == '_';
         });
}

}  // namespace

std::vector<std::string> ToyGrammar::vocabulary() const {
  std::set<std::string> words;
  for (const auto& slot : slots)
    for (const auto& alternative : slot)
      for (const auto& symbol : alternative) {
        if (is_class_symbol(symbol)) {
          const auto& members = word_classes.at(symbol);
          words.insert(members.begin(), members.end());
        } else {
          words.insert(symbol);
        }
      }
  return {words.begin(), words.end()};
}

std::vector<std::size_t> ToyGrammar::reachable_lengths() const {
  std::set<std::size_t> lengths = {0};
  for (const auto& slot : slots) {
    std::set<std::size_t> next;
    for (std::size_t base : lengths)
      for (const auto& alternative : slot) next.insert(base + alternative.size());
    lengths = std::move(next);
  }
  return {lengths.begin(), lengths.end()};
}

ToyGrammar default_toy_grammar() {
  ToyGrammar g;
  g.word_classes["ADV"] = {"reportedly", "meanwhile", "apparently",
                           "nevertheless", "unexpectedly", "yesterday"};
  g.word_classes["ADJ"] = {"old",   "young", "tall",  "small", "angry",
                           "happy", "quiet", "local", "brave", "famous",
                           "tired", "clever"};
  g.word_classes["NOUN"] = {"dog",     "cat",    "farmer",  "teacher",
                            "soldier", "doctor", "child",   "horse",
                            "pilot",   "singer", "lawyer",  "student",
                            "king",    "queen",  "baker",   "driver",
                            "monkey",  "writer", "captain", "nurse"};
  g.word_classes["VERB_I"] = {"slept",  "laughed", "smiled", "waited",
                              "danced", "cried",   "left",   "arrived"};
  g.word_classes["VERB_T"] = {"saw",     "helped",  "followed", "called",
                              "visited", "watched", "met",      "thanked",
                              "painted", "chased",  "praised",  "greeted"};
  g.word_classes["PREP"] = {"in", "near", "behind", "at", "outside", "inside"};
  g.word_classes["PLACE"] = {"park",   "market", "station", "school",
                             "church", "harbor", "garden",  "library",
                             "castle", "bridge"};
  g.slots = {
      {{}, {"ADV"}},
      {{"the", "NOUN"}, {"the", "ADJ", "NOUN"}},
      {{"VERB_I"}, {"VERB_T", "the", "NOUN"}, {"VERB_T", "the", "ADJ", "NOUN"}},
      {{}, {"PREP", "the", "PLACE"}},
      {{"."}},
  };
  return g;
}

std::vector<std::string> generate_toy_corpus(const ToyGrammar& grammar,
                                             std::size_t size,
                                             std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  // Modulo draws keep the stream independent of the standard library's
  // distribution implementations.
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(engine() % n); };
  std::vector<std::string> lines;
  lines.reserve(size);
  for (std::size_t k = 0; k < size; ++k) {
    std::vector<std::string> words;
    for (const auto& slot : grammar.slots) {
      const auto& alternative = slot[pick(slot.size())];
      for (const auto& symbol : alternative) {
        if (is_class_symbol(symbol)) {
          const auto& members = grammar.word_classes.at(symbol);
          words.push_back(members[pick(members.size())]);
        } else {
          words.push_back(symbol);
        }
      }
    }
    std::string line = join_tokens(words);
    // Surface form: capitalized first letter, period attached.
    if (!line.empty()) line[0] = static_cast<char>(std::toupper(line[0]));
    const auto pos = line.rfind(" .");
    if (pos != std::string::npos && pos + 2 == line.size()) line.erase(pos, 1);
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace lenvae
