use std::collections::BTreeSet;
use std::path::Path;

use super::ParseError;

/// Spatial words whose phrases never denote an object.
pub const DEFAULT_STOP_WORDS: &[&str] = &[
    "top", "bottom", "beside", "towards", "front", "left", "right", "center", "middle", "rear",
    "edge", "corner", "periphery", "interior", "exterior", "upstairs", "downstairs", "sideways",
    "diagonal", "opposite", "adjacent", "parallel", "north", "south", "east", "west", "northeast",
    "southeast", "southwest", "downward", "inward", "outward", "lengthwise", "crosswise", "amidst",
    "amongst", "proximity", "vicinity",
];

const NOUNS: &[&str] = &[
    // animals
    "sheep", "goat", "koala", "kangaroo", "wolf", "cat", "dog", "retriever", "lion", "fox",
    "tiger", "leopard", "owl", "squirrel", "mustang", "deer", "bison", "gazelle", "bunny",
    "porcupine", "cheetah", "bear", "coyote", "giraffe", "elephant", "hare", "tortoise", "hyena",
    "zebra", "falcon", "dove", "hummingbird", "eagle", "toucan", "pigeon", "parrot", "jellyfish",
    "sea", "turtle", "crocodile", "manatee", "butterfly", "bee", "dragonfly", "horse", "cow",
    "bird", "mouse", "rabbit", "duck", "frog", "monkey", "pig", "chicken", "fish", "snake",
    "penguin", "dolphin", "whale", "shark", "panda", "camel", "puppy", "kitten", "lamb",
    // plants and food
    "dandelion", "sunflower", "apple", "pear", "peach", "orange", "pineapple", "banana",
    "sandwich", "broccoli", "carrot", "pizza", "donut", "cake", "lemon", "strawberry", "tomato",
    "flower", "rose", "tulip", "tree", "plant", "grapes", "cherry", "melon", "watermelon",
    // things
    "robot", "muppet", "drone", "kite", "car", "bicycle", "bike", "motorcycle", "airplane",
    "plane", "bus", "train", "truck", "boat", "bench", "backpack", "umbrella", "handbag", "tie",
    "suitcase", "frisbee", "skis", "snowboard", "ball", "bat", "glove", "skateboard",
    "surfboard", "racket", "bottle", "glass", "cup", "fork", "knife", "spoon", "bowl", "chair",
    "couch", "sofa", "bed", "table", "toilet", "tv", "television", "laptop", "remote",
    "keyboard", "phone", "microwave", "oven", "toaster", "sink", "refrigerator", "book", "clock",
    "vase", "scissors", "toothbrush", "teddy", "hydrant", "sign", "meter", "light", "lamp",
    "box", "bag", "hat", "shirt", "dress", "shoe", "shoes", "crown", "balloon", "guitar",
    "piano", "violin", "computer", "camera", "pot", "plate", "mug", "pillow", "blanket",
    // people
    "person", "man", "woman", "child", "boy", "girl", "people", "player", "baby", "lady",
    "astronaut", "knight", "wizard",
    // places and scenery
    "house", "road", "street", "field", "grass", "water", "sky", "beach", "room", "kitchen",
    "building", "window", "door", "wall", "floor", "mountain", "river", "lake", "hill", "city",
    "park", "snow", "forest", "desert", "ocean", "castle", "bridge", "tower", "garden", "rock",
    "moon", "sun", "cloud", "side", "background",
];

const ADJECTIVES: &[&str] = &[
    // colors
    "red", "white", "black", "blue", "green", "yellow", "brown", "gray", "grey", "pink",
    "purple", "golden", "silver", "gold", "beige", "violet",
    // benchmark attributes
    "fluffy", "bare", "friendly", "watchful", "howling", "purring", "regal", "sly", "striped",
    "spotted", "wise", "nimble", "wild", "graceful", "robust", "dainty", "soft", "spiky",
    "swift", "lumbering", "cunning", "timid", "towering", "sturdy", "sprightly", "slow-moving",
    "fierce", "gentle", "hovering", "perching", "perched", "vibrant", "modest", "chatty",
    "silent", "luminescent", "matte", "beautiful", "wispy", "dense", "ripe", "tangy",
    "succulent", "crisp", "rusty", "delicate", "futuristic", "traditional",
    // common descriptors
    "big", "small", "large", "little", "tiny", "huge", "tall", "short", "long", "old", "young",
    "new", "happy", "sad", "cute", "wooden", "metal", "plastic", "glass", "shiny", "dark",
    "bright", "furry", "round", "square", "fat", "thin", "wet", "dry", "hot", "cold", "fresh",
];

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "one", "two", "three", "four",
    "many", "several", "every", "each", "my", "your", "our", "his", "her", "its", "their",
    "another",
];

/// Closed-class words and common verbs that always end a phrase.
const BREAKS: &[&str] = &[
    "and", "or", "but", "with", "without", "on", "in", "at", "of", "to", "near", "next", "by",
    "for", "from", "under", "over", "above", "below", "behind", "into", "onto", "through",
    "across", "around", "between", "among", "against", "along", "while", "as", "is", "are",
    "was", "were", "be", "being", "been", "has", "have", "had", "which", "who", "whom", "where",
    "very", "not", "sitting", "standing", "holding", "riding", "eating", "walking", "running",
    "playing", "lying", "laying", "flying", "looking", "parked", "sits", "stands", "looks",
    "flies", "swims", "swimming", "jumping", "together", "towards", "toward", "beside", "besides",
    "amid", "amidst", "amongst", "inside", "outside", "beneath", "beyond", "within", "upon", "atop",
];

/// Word classes used by the chunker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordClass {
    Determiner,
    Adjective,
    Noun,
    Break,
    Unknown,
}

/// Noun and adjective vocabularies plus the fixed closed classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    nouns: BTreeSet<String>,
    adjectives: BTreeSet<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_words(NOUNS.iter().copied(), ADJECTIVES.iter().copied())
    }
}

impl Lexicon {
    pub fn from_words<'a>(
        nouns: impl IntoIterator<Item = &'a str>,
        adjectives: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        Self {
            nouns: nouns.into_iter().map(str::to_lowercase).collect(),
            adjectives: adjectives.into_iter().map(str::to_lowercase).collect(),
        }
    }

    /// Loads noun and adjective lists, one word per line.
    pub fn load(nouns: &Path, adjectives: &Path) -> Result<Self, ParseError> {
        let n = read_word_list(nouns)?;
        let a = read_word_list(adjectives)?;
        Ok(Self::from_words(n.iter().map(String::as_str), a.iter().map(String::as_str)))
    }

    pub fn class_of(&self, word: &str) -> WordClass {
        if DETERMINERS.contains(&word) {
            WordClass::Determiner
        } else if BREAKS.contains(&word) {
            WordClass::Break
        } else if self.nouns.contains(word) {
            // a handful of words ("glass") are in both lists; noun wins
            WordClass::Noun
        } else if self.adjectives.contains(word) {
            WordClass::Adjective
        } else {
            WordClass::Unknown
        }
    }
}

/// Set of core nouns whose phrases are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct StopWords(BTreeSet<String>);

impl Default for StopWords {
    fn default() -> Self {
        Self::from_words(DEFAULT_STOP_WORDS.iter().copied())
    }
}

impl StopWords {
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        Self(words.into_iter().map(str::to_lowercase).collect())
    }

    pub fn load(path: &Path) -> Result<Self, ParseError> {
        let words = read_word_list(path)?;
        Ok(Self::from_words(words.iter().map(String::as_str)))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One word per line; blank lines and `#` comments ignored.
pub fn read_word_list(path: &Path) -> Result<Vec<String>, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|e| ParseError::WordList {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}
