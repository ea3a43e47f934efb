"""Flag space: dump parsing, encode/decode roundtrips, CLI rendering."""

from __future__ import annotations

import numpy as np
import pytest

from flagtuner.flagspace import (
    BOOLEAN,
    CATEGORICAL,
    CONTINUOUS,
    INTEGER,
    Configuration,
    FlagSpace,
    FlagSpec,
    format_flag_dump,
    load_flag_file,
    parse_flag_dump,
    save_flag_file,
    unit_space,
)

from conftest import make_mixed_space, random_config, random_spaces

# A realistic PrintFlagsFinal-style dump: one non-flag banner line, string
# flags, a multi-word category, ':=' markers, every numeric value type.
DUMP_TEXT = """\
[Global flags]
     intx ActiveProcessorCount                     = -1                                  {product}
    uintx AdaptiveSizePolicyWeight                 = 10                                  {product}
     bool AggressiveOpts                           = false                               {product}
    uintx AutoBoxCacheMax                          = 128                                 {C2 product}
     bool BackgroundCompilation                    = true                                {pd product}
    uintx CICompilerCount                          := 12                                 {product}
   double CompileThresholdScaling                  = 1.000000                            {product}
    ccstr DumpLoadedClassList                      =                                     {product}
     bool UseG1GC                                  := true                               {product}
    uintx MaxGCPauseMillis                         = 200                                 {product}
uint64_t MaxRAM                                    = 137438953472                        {pd product}
     intx ObjectAlignmentInBytes                   = 8                                   {lp64_product}
ccstrlist CompileCommand                           =                                     {product}
     bool UseParallelGC                            = false                               {product}
    uintx G1HeapRegionSize                         = 0                                   {product}
"""

GROUP_RULES = {"G1|MaxGCPause": "G1GC", "Parallel": "ParallelGC"}


class TestParseFlagDump:
    def test_parses_all_tunable_flags(self):
        space = parse_flag_dump(DUMP_TEXT)
        assert space.dimension == 13
        # string flags skipped silently; only the banner line is malformed
        assert space.parse_warnings == 1
        names = {f.name for f in space.flags}
        assert "DumpLoadedClassList" not in names
        assert "CompileCommand" not in names

    def test_uintx_range_doubles_default(self):
        # range rule: default 200 -> [0, 400]
        f = parse_flag_dump(DUMP_TEXT).flag("MaxGCPauseMillis")
        assert f.kind == INTEGER
        assert f.range == (0, 400)
        assert f.default == 200

    def test_modified_value_marker_parses(self):
        f = parse_flag_dump(DUMP_TEXT).flag("CICompilerCount")
        assert f.default == 12
        assert f.range == (0, 24)

    def test_bool_flag(self):
        f = parse_flag_dump(DUMP_TEXT).flag("UseG1GC")
        assert f.kind == BOOLEAN
        assert f.default is True
        assert f.range == (False, True)

    def test_double_flag(self):
        f = parse_flag_dump(DUMP_TEXT).flag("CompileThresholdScaling")
        assert f.kind == CONTINUOUS
        assert f.range == (0.0, 2.0)
        assert f.default == 1.0

    def test_zero_default_gets_unit_range(self):
        f = parse_flag_dump(DUMP_TEXT).flag("G1HeapRegionSize")
        assert f.range == (0, 1)

    def test_negative_default_range_below_zero(self):
        f = parse_flag_dump(DUMP_TEXT).flag("ActiveProcessorCount")
        assert f.range == (-2, 0)
        assert f.default == -1

    def test_large_uint64_not_clamped_below_type(self):
        f = parse_flag_dump(DUMP_TEXT).flag("MaxRAM")
        assert f.range == (0, 2 * 137438953472)

    def test_single_line_example(self):
        space = parse_flag_dump("uintx MaxHeapFreeRatio = 70 {manageable}\n")
        f = space.flag("MaxHeapFreeRatio")
        assert (f.kind, f.range, f.default) == (INTEGER, (0, 140), 70)
        assert space.parse_warnings == 0

    def test_empty_dump_is_error(self):
        with pytest.raises(ValueError, match="no flags"):
            parse_flag_dump("")
        with pytest.raises(ValueError, match="no flags"):
            parse_flag_dump("[Global flags]\n\n")

    def test_malformed_lines_counted(self):
        text = (
            "uintx Good = 1 {product}\n"
            "uintx Broken = notanumber {product}\n"
            "uintx MissingBraces = 3 product\n"
            "what even is this\n"
        )
        space = parse_flag_dump(text)
        assert space.dimension == 1
        assert space.parse_warnings == 3

    def test_duplicate_name_keeps_first_and_warns(self):
        text = "uintx Dup = 1 {a}\nuintx Dup = 9 {b}\n"
        space = parse_flag_dump(text)
        assert space.flag("Dup").default == 1
        assert space.parse_warnings == 1

    def test_group_rules_first_match_wins(self):
        space = parse_flag_dump(DUMP_TEXT, group_rules=GROUP_RULES)
        assert space.flag("UseG1GC").group == "G1GC"
        assert space.flag("MaxGCPauseMillis").group == "G1GC"
        assert space.flag("G1HeapRegionSize").group == "G1GC"
        assert space.flag("UseParallelGC").group == "ParallelGC"
        assert space.flag("AutoBoxCacheMax").group == "common"

    def test_active_groups_restrict_dimension(self):
        space = parse_flag_dump(
            DUMP_TEXT, group_rules=GROUP_RULES, active_groups=["common"]
        )
        active = {f.name for f in space.active_flags}
        assert "UseG1GC" not in active
        assert "AutoBoxCacheMax" in active
        assert space.dimension == 9

    def test_format_parse_idempotent(self):
        space = parse_flag_dump(DUMP_TEXT, group_rules=GROUP_RULES)
        again = parse_flag_dump(format_flag_dump(space), group_rules=GROUP_RULES)
        assert again.flags == space.flags


class TestEncodeDecode:
    def test_frozen_examples(self):
        space = make_mixed_space()
        cfg = Configuration(
            {"UseFooGC": True, "FooThreads": 4, "FooRatio": 0.5, "FooMode": "fast"}
        )
        vec = space.encode(cfg)
        # bool true -> 1.0; 4 of [0,10] -> 0.4; 0.5 of [0,2] -> 0.25;
        # 'fast' = index 1 of 3 -> 0.5
        assert vec.tolist() == [1.0, 0.4, 0.25, 0.5]

    def test_encode_range_is_unit_interval(self):
        for space, rng in random_spaces(25, seed=1):
            for _ in range(5):
                vec = space.encode(random_config(space, rng))
                assert np.all(vec >= 0.0) and np.all(vec <= 1.0)

    def test_roundtrip_exact(self):
        # decode(encode(config)) == config for every kind
        for space, rng in random_spaces(25, seed=2):
            for _ in range(5):
                cfg = random_config(space, rng)
                back = space.decode(space.encode(cfg))
                assert dict(back.items()) == dict(cfg.items())

    def test_decode_zero_vector_hits_lower_bounds(self):
        space = make_mixed_space()
        cfg = space.decode(np.zeros(space.dimension))
        assert dict(cfg.items()) == {
            "UseFooGC": False, "FooThreads": 0, "FooRatio": 0.0, "FooMode": "slow"
        }

    def test_integer_decode_rounds_to_nearest(self):
        space = FlagSpace((FlagSpec("N", INTEGER, (0, 10), 5),))
        assert space.decode(np.array([0.449]))["N"] == 4
        assert space.decode(np.array([0.451]))["N"] == 5

    def test_decode_length_mismatch(self):
        space = make_mixed_space()
        with pytest.raises(ValueError, match="length"):
            space.decode(np.zeros(space.dimension + 1))

    def test_decode_out_of_unit_interval(self):
        space = make_mixed_space()
        vec = np.zeros(space.dimension)
        vec[1] = 1.2
        with pytest.raises(ValueError, match="outside"):
            space.decode(vec)

    def test_encode_out_of_range_names_flag(self):
        space = make_mixed_space()
        cfg = Configuration(
            {"UseFooGC": True, "FooThreads": 11, "FooRatio": 0.5, "FooMode": "fast"}
        )
        with pytest.raises(ValueError, match="FooThreads"):
            space.encode(cfg)

    def test_missing_assignment_rejected(self):
        space = make_mixed_space()
        with pytest.raises(ValueError, match="missing"):
            space.validate(Configuration({"UseFooGC": True}))

    def test_unknown_assignment_rejected(self):
        space = make_mixed_space()
        cfg = space.default_configuration().replaced(Bogus=1)
        with pytest.raises(ValueError, match="unknown"):
            space.validate(cfg)


class TestRender:
    def test_jvm_styles(self):
        space = make_mixed_space()
        cfg = Configuration(
            {"UseFooGC": True, "FooThreads": 7, "FooRatio": 0.75, "FooMode": "auto"}
        )
        assert space.render_cli_args(cfg) == [
            "-XX:+UseFooGC",
            "-XX:FooThreads=7",
            "-XX:FooRatio=0.75",
            "-XX:FooMode=auto",
        ]

    def test_jvm_bool_disable(self):
        space = make_mixed_space()
        cfg = space.default_configuration().replaced(UseFooGC=False)
        assert space.render_cli_args(cfg)[0] == "-XX:-UseFooGC"

    def test_assign_style_single_token(self):
        space = unit_space(2)
        cfg = space.decode(np.array([0.25, 1.0]))
        assert space.render_cli_args(cfg) == ["--x0=0.25", "--x1=1.0"]

    def test_one_arg_per_flag_in_space_order(self):
        for space, rng in random_spaces(10, seed=3):
            cfg = random_config(space, rng)
            args = space.render_cli_args(cfg)
            assert len(args) == space.dimension
            for arg, f in zip(args, space.active_flags):
                assert f.name in arg


class TestSpaceStructure:
    def test_duplicate_names_rejected(self):
        f = FlagSpec("A", BOOLEAN, (False, True), True)
        with pytest.raises(ValueError, match="duplicate"):
            FlagSpace((f, f))

    def test_subset_keeps_order_and_errors_on_unknown(self):
        space = make_mixed_space()
        sub = space.subset(["FooMode", "UseFooGC"])
        assert [f.name for f in sub.active_flags] == ["UseFooGC", "FooMode"]
        with pytest.raises(ValueError, match="Nope"):
            space.subset(["Nope"])

    def test_override_replaces_fields(self):
        space = make_mixed_space()
        out = space.override("FooThreads", range=(2, 6), default=3)
        assert out.flag("FooThreads").range == (2, 6)
        assert out.flag("FooThreads").default == 3
        # original untouched
        assert space.flag("FooThreads").range == (0, 10)

    def test_invalid_specs_rejected(self):
        with pytest.raises(ValueError, match="default"):
            FlagSpec("A", INTEGER, (0, 5), 9)
        with pytest.raises(ValueError, match="empty range"):
            FlagSpec("A", CONTINUOUS, (1.0, 1.0), 1.0)
        with pytest.raises(ValueError, match="kind"):
            FlagSpec("A", "enum", (1, 2), 1)
        with pytest.raises(ValueError, match="name"):
            FlagSpec("", BOOLEAN, (False, True), True)

    def test_integer_point_range_encodes_to_zero(self):
        space = FlagSpace((FlagSpec("K", INTEGER, (3, 3), 3), FlagSpec("B", BOOLEAN, (False, True), False)))
        vec = space.encode(space.default_configuration())
        assert vec[0] == 0.0
        assert space.decode(vec)["K"] == 3


class TestFlagFiles:
    def test_yaml_roundtrip(self, tmp_path):
        space = FlagSpace(
            (
                FlagSpec("UseFooGC", BOOLEAN, (False, True), True, group="FooGC"),
                FlagSpec("FooThreads", INTEGER, (0, 10), 4),
                FlagSpec("FooRatio", CONTINUOUS, (0.0, 2.0), 0.5, render_style="assign"),
                FlagSpec("FooMode", CATEGORICAL, ("slow", "fast"), "slow"),
            ),
            active_groups=frozenset({"FooGC"}),
        )
        path = tmp_path / "space.yaml"
        save_flag_file(space, str(path))
        back = load_flag_file(str(path))
        assert back.flags == space.flags
        assert back.active_groups == space.active_groups

    def test_missing_fields_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("flags:\n  - name: X\n    kind: integer\n")
        with pytest.raises(ValueError, match="range"):
            load_flag_file(str(path))

    def test_flags_key_required(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("active_groups: [a]\n")
        with pytest.raises(ValueError, match="flags"):
            load_flag_file(str(path))
