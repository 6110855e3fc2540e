#pragma once

#include "factorizer/analysis.hpp"
#include "factorizer/bpe.hpp"
#include "factorizer/checkpoint.hpp"
#include "factorizer/corpus.hpp"
#include "factorizer/dawg.hpp"
#include "factorizer/error.hpp"
#include "factorizer/model.hpp"
#include "factorizer/symbols.hpp"
#include "factorizer/tokenizer.hpp"
#include "factorizer/training.hpp"
#include "factorizer/triplet.hpp"
#include "factorizer/utf8.hpp"
#include "factorizer/vocab.hpp"
#include "factorizer/vq.hpp"
