#pragma once

#include "catmt/corpus.hpp"
#include "catmt/harvester.hpp"
#include "catmt/inference.hpp"
#include "catmt/metrics.hpp"
#include "catmt/model.hpp"
#include "catmt/tokenizer.hpp"
#include "catmt/trainer.hpp"
#include "catmt/vicodec.hpp"
