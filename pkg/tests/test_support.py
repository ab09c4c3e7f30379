"""Audio I/O, run configuration, colormap and figure helpers."""

import json

import matplotlib
import numpy as np
import pytest
from scipy.io import wavfile

from burstpipe.audio_io import AudioIOError, read_wav, resample, write_wav
from burstpipe.config import ConfigError, RunConfig, apply_overrides, load_config, replace_mel, to_dict, write_effective
from burstpipe.dsp import AudioClip
from burstpipe.melpipe import MelConfig
from burstpipe.metrics import EmotionScores, EvalReport
from burstpipe.plotting import plot_grid, plot_report
from burstpipe.viridis import VIRIDIS_LUT, VIRIDIS_RGB, apply_viridis
from corpus import tone

# -- WAV ----------------------------------------------------------------------

def test_pcm16_round_trip(tmp_path):
    x = tone(440, 0.25)
    write_wav(tmp_path / "a.wav", AudioClip(x, 16000))
    rate, raw = wavfile.read(tmp_path / "a.wav")
    assert rate == 16000 and raw.dtype == np.int16 and raw.ndim == 1
    back = read_wav(tmp_path / "a.wav")
    assert np.max(np.abs(back.samples - x)) <= 1 / 32768 + 1 / 32767


def test_pcm16_clips_out_of_range(tmp_path):
    write_wav(tmp_path / "a.wav", AudioClip(np.array([2.0, -2.0, 0.5]), 8000))
    _, raw = wavfile.read(tmp_path / "a.wav")
    assert raw.tolist() == [32767, -32767, 16384]


def test_float32_round_trip(tmp_path):
    x = np.random.default_rng(0).uniform(-1, 1, 1000)
    write_wav(tmp_path / "a.wav", AudioClip(x, 16000), "float32")
    np.testing.assert_array_equal(read_wav(tmp_path / "a.wav").samples, x.astype(np.float32))


@pytest.mark.parametrize(
    "data,want",
    [
        (np.array([0, 128, 255], np.uint8), [-1.0, 0.0, 127 / 128]),
        (np.array([-32768, 16384], np.int16), [-1.0, 0.5]),
        (np.array([-2**31, 2**30], np.int32), [-1.0, 0.5]),
    ],
)
def test_read_integer_formats(tmp_path, data, want):
    wavfile.write(tmp_path / "a.wav", 8000, data)
    np.testing.assert_allclose(read_wav(tmp_path / "a.wav").samples, want)


def test_stereo_downmix(tmp_path):
    wavfile.write(tmp_path / "s.wav", 8000, np.array([[0.5, -0.5], [1.0, 0.0]], np.float32))
    np.testing.assert_allclose(read_wav(tmp_path / "s.wav").samples, [0.0, 0.5])


def test_read_errors(tmp_path):
    (tmp_path / "bad.wav").write_bytes(b"RIFF0000junk")
    with pytest.raises(AudioIOError, match="bad.wav"):
        read_wav(tmp_path / "bad.wav")
    with pytest.raises(AudioIOError):
        write_wav(tmp_path / "x.wav", AudioClip(np.zeros(3), 8000), "mp3")


def test_resample_preserves_tone():
    clip = AudioClip(tone(1000, 1.0, sr=22050), 22050)
    out = resample(clip, 16000)
    assert out.sample_rate == 16000 and abs(len(out) - 16000) <= 1
    spectrum = np.abs(np.fft.rfft(out.samples))
    assert abs(np.argmax(spectrum) * 16000 / len(out) - 1000) < 2
    assert resample(out, 16000) is out


# -- config -------------------------------------------------------------------

def test_default_config_round_trip():
    cfg = RunConfig()
    assert load_config(None) == cfg
    from burstpipe.config import from_dict

    assert from_dict(json.loads(json.dumps(to_dict(cfg)))) == cfg


def test_toml_and_overrides(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('seed = 5\n[mel]\nn_mels = 256\nhop_length = 128\n[griffin_lim]\nmomentum = 0.0\n')
    cfg = load_config(p, ["griffin_lim.n_iter=8", "threads=3"])
    assert cfg.seed == 5 and cfg.threads == 3
    assert cfg.mel.n_mels == 256 and cfg.mel.frames == 256
    # the STFT is shared by every stage
    assert cfg.mel.stft.hop_length == cfg.denoise.stft.hop_length == cfg.griffin_lim.stft.hop_length == 128
    assert cfg.griffin_lim.n_iter == 8 and cfg.griffin_lim.momentum == 0.0
    assert cfg.griffin_lim.seed == 5


def test_json_config(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps({"metrics": {"heep_mode": "overall"}}))
    assert load_config(p).metrics.heep_mode == "overall"


@pytest.mark.parametrize(
    "overrides",
    [
        ["bogus=1"],
        ["mel.bogus=1"],
        ["mel.n_mels=0"],
        ["mel.hop_length=4096"],
        ["griffin_lim.momentum=1.0"],
        ["metrics.heep_mode=columnwise"],
        ["threads=0"],
        ["wav_format=mp3"],
        ["generator.split_preset=everything"],
        ["mel.n_mels=2000"],
        ["noequals"],
        ["a.b.c=1"],
        ["empty.fraction_threshold=2"],
    ],
)
def test_invalid_configs_rejected(overrides):
    with pytest.raises(ConfigError):
        load_config(None, overrides)


def test_unreadable_or_malformed_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    (tmp_path / "bad.toml").write_text("[mel\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")


def test_thread_cap(monkeypatch):
    cfg = load_config(None, ["threads=8"])
    monkeypatch.delenv("BURSTPIPE_THREADS", raising=False)
    assert cfg.effective_threads() == 8
    monkeypatch.setenv("BURSTPIPE_THREADS", "2")
    assert cfg.effective_threads() == 2
    monkeypatch.setenv("BURSTPIPE_THREADS", "many")
    with pytest.raises(ConfigError):
        cfg.effective_threads()


def test_item_seed_stable_and_distinct():
    cfg = RunConfig(seed=42)
    assert cfg.item_seed("a.png") == cfg.item_seed("a.png")
    assert cfg.item_seed("a.png") != cfg.item_seed("b.png")
    assert RunConfig(seed=43).item_seed("a.png") != cfg.item_seed("a.png")
    assert 0 <= cfg.item_seed("x") < 2**32


def test_apply_overrides_does_not_mutate():
    data = {"mel": {"n_mels": 128}}
    out = apply_overrides(data, ["mel.n_mels=256", 'wav_format="float32"'])
    assert data == {"mel": {"n_mels": 128}} and out["mel"]["n_mels"] == 256 and out["wav_format"] == "float32"


def test_effective_config_and_replace_mel(tmp_path):
    cfg = replace_mel(RunConfig(), MelConfig(n_mels=256))
    path = write_effective(cfg, tmp_path)
    assert json.loads(path.read_text())["mel"]["n_mels"] == 256


# -- viridis ------------------------------------------------------------------

def test_viridis_table_matches_matplotlib():
    cmap = matplotlib.colormaps["viridis"].resampled(256)
    want = np.rint(cmap(np.arange(256))[:, :3] * 255).astype(np.uint8)
    np.testing.assert_array_equal(np.array(VIRIDIS_RGB, dtype=np.uint8), want)
    assert VIRIDIS_RGB[0] == (68, 1, 84) and VIRIDIS_RGB[255] == (253, 231, 37)


def test_apply_viridis_shape_and_lookup():
    px = np.arange(256, dtype=np.uint8).reshape(16, 16)
    rgb = apply_viridis(px)
    assert rgb.shape == (16, 16, 3) and rgb.dtype == np.uint8
    np.testing.assert_array_equal(rgb.reshape(-1, 3), VIRIDIS_LUT)
    assert not VIRIDIS_LUT.flags.writeable


# -- figures ------------------------------------------------------------------

def test_plot_grid_and_report(tmp_path):
    imgs = [np.random.default_rng(i).integers(0, 256, (32, 32), dtype=np.uint8) for i in range(7)]
    plot_grid(imgs, tmp_path / "g.png", titles=[str(i) for i in range(7)])
    assert (tmp_path / "g.png").stat().st_size > 0
    report = EvalReport({"awe": EmotionScores(1.76, 0.455), "fear": EmotionScores(1.57, float("nan"))})
    plot_report(report, tmp_path / "r.png")
    assert (tmp_path / "r.png").stat().st_size > 0
    plot_grid([], tmp_path / "none.png")
    assert not (tmp_path / "none.png").exists()
