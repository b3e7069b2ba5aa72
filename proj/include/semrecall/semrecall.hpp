// Copyright 2026 The semrecall Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "semrecall/analysis.hpp"
#include "semrecall/common.hpp"
#include "semrecall/corpus.hpp"
#include "semrecall/digest.hpp"
#include "semrecall/exact_search.hpp"
#include "semrecall/ivf.hpp"
#include "semrecall/judge.hpp"
#include "semrecall/kmeans.hpp"
#include "semrecall/manifest.hpp"
#include "semrecall/matching.hpp"
#include "semrecall/metrics.hpp"
#include "semrecall/synth.hpp"
#include "semrecall/tuning.hpp"
