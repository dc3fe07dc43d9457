#pragma once

namespace lenvae::testing {

struct RougeFixture {
  const char* candidate;
  const char* references[2];
  // recall, precision, f1 for ROUGE-1, ROUGE-2, ROUGE-L
  double expected[9];
};

// Reference values from an independent ROUGE implementation; the reference
// with the highest recall (ties: f1) is selected per metric.
const RougeFixture kFixtures[] = {
    {"on slowly mat old fast ran", {"saw red old mat slowly big cat mat", "man sat mat old a red old man"}, {0.375, 0.5, 0.42857142857142855, 0.14285714285714285, 0.20000000000000001, 0.16666666666666666, 0.25, 0.33333333333333331, 0.28571428571428575}},
    {"sat big house", {"red mat big old old", "mat old ran mat a"}, {0.20000000000000001, 0.33333333333333331, 0.25, 0, 0, 0, 0.20000000000000001, 0.33333333333333331, 0.25}},
    {"ran the fast big old dog big ran", {"man red sat mat", "saw sat fast house big"}, {0.40000000000000002, 0.25, 0.30769230769230771, 0, 0, 0, 0.40000000000000002, 0.25, 0.30769230769230771}},
    {"man on sat big mat", {"cat dog on the sat man ran", "ran cat mat slowly ran"}, {0.42857142857142855, 0.59999999999999998, 0.5, 0, 0, 0, 0.2857142857142857, 0.40000000000000002, 0.33333333333333331}},
    {"man fast saw old old mat cat slowly", {"fast sat fast dog saw", "mat house on ran"}, {0.40000000000000002, 0.25, 0.30769230769230771, 0, 0, 0, 0.40000000000000002, 0.25, 0.30769230769230771}},
    {"red a house cat dog", {"a sat mat cat", "on ran saw on on cat sat"}, {0.5, 0.40000000000000002, 0.44444444444444448, 0, 0, 0, 0.5, 0.40000000000000002, 0.44444444444444448}},
    {"dog the dog on big the dog", {"the on a dog mat", "mat mat man on saw big fast"}, {0.59999999999999998, 0.42857142857142855, 0.5, 0, 0, 0, 0.59999999999999998, 0.42857142857142855, 0.5}},
    {"man man mat house man old sat mat", {"slowly house mat on", "man the dog big the"}, {0.5, 0.25, 0.33333333333333331, 0, 0, 0, 0.5, 0.25, 0.33333333333333331}},
    {"ran old a mat man saw a old big", {"big fast on", "dog old cat sat"}, {0.33333333333333331, 0.1111111111111111, 0.16666666666666666, 0, 0, 0, 0.33333333333333331, 0.1111111111111111, 0.16666666666666666}},
    {"the big slowly fast", {"on red man old saw big", "a dog dog red"}, {0.16666666666666666, 0.25, 0.20000000000000001, 0, 0, 0, 0.16666666666666666, 0.25, 0.20000000000000001}},
};

}  // namespace lenvae::testing
