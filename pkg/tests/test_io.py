import numpy as np
import pytest

from mbgen.chem import canonical_form, graph_from_bonds, parse_formula
from mbgen.decoder import decode_logits
from mbgen.io import (
    Checkpoint,
    CheckpointError,
    ConfigError,
    GraphFileError,
    MgfError,
    RunConfig,
    load_checkpoint,
    load_config,
    load_graph_dataset,
    parse_config_text,
    parse_mgf,
    save_checkpoint,
    write_graph_dataset,
    write_mgf,
)
from mbgen.io.checkpoint import from_bytes, to_bytes
from mbgen.io.graphfile import parse_graph_line
from mbgen.io.mgf import parse_mgf_text
from mbgen.nn import make_rng
from mbgen.training import build_decoder, pack_checkpoint, unpack_checkpoint

MINIMAL = """BEGIN IONS
TITLE=s1
FORMULA=C2H6O
45.03 250 C2H5O
END IONS
"""


# MGF

def test_minimal_block():
    (s,) = parse_mgf_text(MINIMAL)
    assert s.title == "s1"
    assert len(s.peaks) == 1 and s.peaks[0].intensity == 1.0
    assert s.precursor == parse_formula("C2H6O")


def test_fragformula_annotations():
    text = "BEGIN IONS\nFORMULA=C2H6O\nFRAGFORMULA=CH3;C2H5\n15.0 10\n29.0 40\nEND IONS\n"
    (s,) = parse_mgf_text(text)
    assert [p.formula for p in s.peaks] == [parse_formula("CH3"), parse_formula("C2H5")]
    assert [p.intensity for p in s.peaks] == [0.25, 1.0]


@pytest.mark.parametrize(
    "text,line",
    [
        ("BEGIN IONS\nFORMULA=C2H6O\n45.0 1 C2H5O\n", 1),  # missing END IONS
        ("BEGIN IONS\nTITLE=x\n45.0 1 C2H5O\nEND IONS\n", 1),  # missing FORMULA
        ("BEGIN IONS\nFORMULA=C2H6O\n45.0 1 C3H5\nEND IONS\n", 3),  # exceeds precursor
        ("BEGIN IONS\nFORMULA=C2H6O\n45.0 abc C2\nEND IONS\n", 3),
        ("BEGIN IONS\nFORMULA=C2H6O\n45.0 1 C2 extra\nEND IONS\n", 3),
        ("BEGIN IONS\nFORMULA=C2H6O\n45.0 1\nEND IONS\n", 3),  # no annotation
        ("\n\nstray\n", 3),
        ("BEGIN IONS\nFORMULA=C2H6O\nBEGIN IONS\n", 3),
        ("BEGIN IONS\nFORMULA=C2H6O\nEND IONS\n", 3),  # no peaks
    ],
)
def test_mgf_errors_carry_line(text, line):
    with pytest.raises(MgfError) as err:
        parse_mgf_text(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_mgf_round_trip(tmp_path):
    text = MINIMAL + "\nBEGIN IONS\nTITLE=s2\nFORMULA=C6H6\n78.05 100 C6H6\n52.03 20 C4H4\nEND IONS\n"
    spectra = parse_mgf_text(text)
    write_mgf(tmp_path / "a.mgf", spectra)
    again = parse_mgf(tmp_path / "a.mgf")
    assert [(s.title, s.precursor, s.peaks) for s in again] == [(s.title, s.precursor, s.peaks) for s in spectra]


# graph records

def test_graph_line_ethanol():
    ident, g = parse_graph_line("m1 C2H6O 0-1:1;1-2:1")
    assert ident == "m1"
    assert g.nodes == ("C", "C", "O")
    assert g.edges[0, 1] == 1 and g.edges[1, 2] == 1 and g.edges[0, 2] == 0


def test_graph_line_benzene():
    _, g = parse_graph_line("m2 C6H6 0-1:4;1-2:4;2-3:4;3-4:4;4-5:4;5-0:4")
    ring = graph_from_bonds(parse_formula("C6H6"), [(i, (i + 1) % 6, 4) for i in range(6)])
    assert canonical_form(g) == canonical_form(ring)


@pytest.mark.parametrize(
    "line",
    [
        "m3 C2H6 0-1:1;0-1:2",  # duplicate pair
        "m C2H6 0-2:1",  # out of range
        "m C2H6 1-1:1",  # self pair
        "m C2H6 1-0:1;0-1:1",  # duplicate written in both orders
        "m C2H6 0-1:5",
        "m C2H6 0_1:1",
        "m C2Q6 0-1:1",
        "m",
    ],
)
def test_graph_line_errors(line):
    with pytest.raises(GraphFileError) as err:
        parse_graph_line(line, 7)
    assert err.value.line == 7


def test_graph_dataset_round_trip(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("# toy\nm1 C2H6O 0-1:1;1-2:1\n\nm2 C2H6 0-1:1\nm4 CH4 -\n")
    recs = load_graph_dataset(path)
    assert [r[0] for r in recs] == ["m1", "m2", "m4"]
    write_graph_dataset(tmp_path / "h.txt", recs)
    assert (tmp_path / "h.txt").read_text() == "m1 C2H6O 0-1:1;1-2:1\nm2 C2H6 0-1:1\nm4 CH4 -\n"


def test_graph_dataset_error_line(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("m1 C2H6O 0-1:1\n\nm3 C2H6 0-1:1;0-1:2\n")
    with pytest.raises(GraphFileError, match="line 3"):
        load_graph_dataset(path)


# config

def test_config_parse():
    cfg = parse_config_text("# desk\nseed = 3\nlr = 0.002\nmany_body = false\nsteps_decoder = 1_000\n")
    assert (cfg.seed, cfg.lr, cfg.many_body, cfg.steps_decoder) == (3, 0.002, False, 1000)


@pytest.mark.parametrize(
    "text,line",
    [("seed = 1\nbogus = 2\n", 2), ("seed = x\n", 1), ("seed = 1\nseed = 2\n", 2), ("\n\njust words\n", 3), ("many_body = maybe\n", 1)],
)
def test_config_errors(text, line):
    with pytest.raises(ConfigError) as err:
        parse_config_text(text)
    assert err.value.line == line


def test_config_paths_resolve_against_file(tmp_path):
    (tmp_path / "c.cfg").write_text("graphs = data/g.txt\nworkdir = out\n")
    cfg = load_config(tmp_path / "c.cfg")
    assert cfg.graphs == str(tmp_path / "data" / "g.txt")
    assert cfg.workdir == str(tmp_path / "out")


# checkpoints

SMALL = RunConfig(workdir="", dec_d_h=8, dec_d_e=8, dec_d_c=8, dec_d_t=4, dec_layers=1, dec_ffn_hidden=8, enc_d=8, fp_length=16)


def test_checkpoint_save_load_save_identical(tmp_path):
    rng = make_rng(0)
    dec = build_decoder(SMALL, rng)
    ckpt = pack_checkpoint("decoder-pretrain", SMALL, dec=dec, m=np.full(5, 0.2), rng=rng, extra={"note": "x"})
    save_checkpoint(tmp_path / "a.ckpt", ckpt)
    again = load_checkpoint(tmp_path / "a.ckpt")
    save_checkpoint(tmp_path / "b.ckpt", again)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert again.stage == "decoder-pretrain" and again.extra == {"note": "x"}


def test_checkpoint_reproduces_logits_bitwise(tmp_path):
    rng = make_rng(1)
    dec = build_decoder(SMALL, rng)
    nodes = ("C", "C", "N", "O")
    E = np.array([[0, 1, 0, 0], [1, 0, 2, 0], [0, 2, 0, 1], [0, 0, 1, 0]])
    y = rng.normal(size=SMALL.enc_d)
    before = decode_logits(nodes, E, 9, y, dec, 50)
    save_checkpoint(tmp_path / "a.ckpt", pack_checkpoint("decoder-pretrain", SMALL, dec=dec))
    _, loaded, _ = unpack_checkpoint(load_checkpoint(tmp_path / "a.ckpt"))
    assert np.array_equal(decode_logits(nodes, E, 9, y, loaded, 50), before)


def test_checkpoint_corruption_detected():
    blob = to_bytes(Checkpoint("x", {}, {"w": np.arange(6.0).reshape(2, 3)}))
    assert np.array_equal(from_bytes(blob).tensors["w"], np.arange(6.0).reshape(2, 3))
    with pytest.raises(CheckpointError, match="checksum"):
        from_bytes(blob[:-5])
    flipped = bytearray(blob)
    flipped[-40] ^= 1
    with pytest.raises(CheckpointError):
        from_bytes(bytes(flipped))
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(b"nonsense")


def test_checkpoint_shape_mismatch_names_tensor():
    dec = build_decoder(SMALL, make_rng(2))
    ckpt = pack_checkpoint("decoder-pretrain", SMALL, dec=dec)
    wider = SMALL.replace(dec_d_e=16)
    with pytest.raises(CheckpointError, match="decoder.edge_emb.weight"):
        unpack_checkpoint(ckpt, wider)
