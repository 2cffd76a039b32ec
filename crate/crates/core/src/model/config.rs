use crate::error::{Error, Result};

/// Hyperparameters of the translator and discriminator.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Rows of the weighting map.
    pub rows: usize,
    pub patch: (usize, usize),
    /// Widest accepted weighting map; fixes the bias table extent.
    pub max_width: usize,
    pub window: usize,
    pub global_tokens: usize,
    /// Output grid of the pooling step after each layer.
    pub bins: Vec<(usize, usize)>,
    pub ff_mult: usize,
    pub ln_eps: f64,
    pub init_std: f64,
    pub utterance_channels: usize,
    pub decoder_channels: (usize, usize),
    pub disc_channels: (usize, usize, usize),
    pub disc_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            rows: 20,
            patch: (1, 20),
            max_width: 12_000,
            window: 64,
            global_tokens: 8,
            bins: vec![(20, 256), (20, 64), (16, 16), (8, 8)],
            ff_mult: 4,
            ln_eps: 1e-5,
            init_std: 0.02,
            utterance_channels: 4,
            decoder_channels: (32, 16),
            disc_channels: (16, 32, 64),
            disc_hidden: 128,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_pair(key: &str, v: &str) -> Result<(usize, usize)> {
    let (a, b) = v
        .split_once('x')
        .ok_or_else(|| Error::Config(format!("{key}: expected AxB, got {v:?}")))?;
    Ok((parse(key, a)?, parse(key, b)?))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| parse(key, p)).collect()
}

impl ModelConfig {
    /// Token dimension `P_x · P_y`.
    pub fn d(&self) -> usize {
        self.patch.0 * self.patch.1
    }

    /// Largest patch grid, `(M_x, M_y)`.
    pub fn max_grid(&self) -> (usize, usize) {
        (self.rows.div_ceil(self.patch.0), self.max_width.div_ceil(self.patch.1))
    }

    /// Shape of each relative-position table.
    pub fn table_shape(&self) -> (usize, usize) {
        let (mx, my) = self.max_grid();
        (2 * mx - 1, 2 * my - 1)
    }

    pub fn latent_shape(&self) -> [usize; 3] {
        let (bx, by) = *self.bins.last().expect("validated");
        [bx, by, self.d()]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch.0 == 0 || self.patch.1 == 0 || self.rows == 0 || self.max_width == 0 {
            return bad("rows, patch and max_width must be positive".into());
        }
        if self.window == 0 || self.global_tokens == 0 || self.ff_mult == 0 {
            return bad("window, global_tokens and ff_mult must be positive".into());
        }
        if self.bins.is_empty() {
            return bad("at least one layer is required".into());
        }
        let (mx, my) = self.max_grid();
        if let Some(b) = self.bins.iter().find(|b| b.0 == 0 || b.1 == 0 || b.0 > mx || b.1 > my) {
            return bad(format!("bin grid {}x{} outside 1..={mx} x 1..={my}", b.0, b.1));
        }
        if self.latent_shape()[..2] != [8, 8] {
            return bad(format!("last bin grid must be 8x8 for the 64x64 decoder, got {:?}", self.bins.last()));
        }
        if self.utterance_channels > self.d() {
            return bad(format!("utterance_channels {} exceeds d = {}", self.utterance_channels, self.d()));
        }
        if !(self.ln_eps > 0.0) || !(self.init_std > 0.0) {
            return bad("ln_eps and init_std must be positive".into());
        }
        Ok(())
    }

    /// Sets one `key = value` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "rows" => self.rows = parse(key, value)?,
            "patch" => self.patch = parse_pair(key, value)?,
            "max_width" => self.max_width = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "global_tokens" => self.global_tokens = parse(key, value)?,
            "bins" => {
                self.bins = value.split(',').map(|p| parse_pair(key, p.trim())).collect::<Result<_>>()?;
            }
            "ff_mult" => self.ff_mult = parse(key, value)?,
            "ln_eps" => self.ln_eps = parse(key, value)?,
            "init_std" => self.init_std = parse(key, value)?,
            "utterance_channels" => self.utterance_channels = parse(key, value)?,
            "decoder_channels" => match parse_list(key, value)?[..] {
                [a, b] => self.decoder_channels = (a, b),
                _ => return Err(Error::Config(format!("{key}: expected two values"))),
            },
            "disc_channels" => match parse_list(key, value)?[..] {
                [a, b, c] => self.disc_channels = (a, b, c),
                _ => return Err(Error::Config(format!("{key}: expected three values"))),
            },
            "disc_hidden" => self.disc_hidden = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown model key {key:?}"))),
        }
        Ok(())
    }

    /// All entries as `key = value` pairs, the inverse of [`ModelConfig::set`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let bins: Vec<String> = self.bins.iter().map(|(a, b)| format!("{a}x{b}")).collect();
        vec![
            ("rows", self.rows.to_string()),
            ("patch", format!("{}x{}", self.patch.0, self.patch.1)),
            ("max_width", self.max_width.to_string()),
            ("window", self.window.to_string()),
            ("global_tokens", self.global_tokens.to_string()),
            ("bins", bins.join(",")),
            ("ff_mult", self.ff_mult.to_string()),
            ("ln_eps", self.ln_eps.to_string()),
            ("init_std", self.init_std.to_string()),
            ("utterance_channels", self.utterance_channels.to_string()),
            ("decoder_channels", format!("{},{}", self.decoder_channels.0, self.decoder_channels.1)),
            ("disc_channels", format!("{},{},{}", self.disc_channels.0, self.disc_channels.1, self.disc_channels.2)),
            ("disc_hidden", self.disc_hidden.to_string()),
        ]
    }
}
