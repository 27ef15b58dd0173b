#pragma once

#include "virtinh/config.hpp"
#include "virtinh/ctor.hpp"
#include "virtinh/disasm.hpp"
#include "virtinh/error.hpp"
#include "virtinh/evalharness.hpp"
#include "virtinh/image.hpp"
#include "virtinh/instr.hpp"
#include "virtinh/itanium.hpp"
#include "virtinh/loader.hpp"
#include "virtinh/msvc.hpp"
#include "virtinh/pipeline.hpp"
#include "virtinh/recovery.hpp"
#include "virtinh/report.hpp"
#include "virtinh/surface.hpp"
#include "virtinh/text_disasm.hpp"
#include "virtinh/x86.hpp"
