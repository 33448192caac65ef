// Copyright 2026 The ihcq Authors. All Rights Reserved.
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

#ifndef IHCQ_IHCQ_HPP
#define IHCQ_IHCQ_HPP

#include "annotations.hpp"
#include "config.hpp"
#include "core.hpp"
#include "detect.hpp"
#include "embed.hpp"
#include "image.hpp"
#include "inference.hpp"
#include "metrics.hpp"
#include "quantify.hpp"
#include "slide_io.hpp"
#include "stats.hpp"
#include "synth.hpp"

/**
 * @namespace ihcq
 * @brief Whole-slide immunohistochemistry quantification.
 */

#endif
