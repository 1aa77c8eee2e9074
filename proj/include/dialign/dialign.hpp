#pragma once

#include "dialign/baseline_encoder.hpp"
#include "dialign/cer.hpp"
#include "dialign/corpus.hpp"
#include "dialign/embedding.hpp"
#include "dialign/error.hpp"
#include "dialign/fbank.hpp"
#include "dialign/hash.hpp"
#include "dialign/parallel.hpp"
#include "dialign/pipeline.hpp"
#include "dialign/random.hpp"
#include "dialign/report.hpp"
#include "dialign/retrieval.hpp"
#include "dialign/seqsim.hpp"
#include "dialign/synth.hpp"
#include "dialign/textnorm.hpp"
#include "dialign/utf8.hpp"
#include "dialign/wav.hpp"
